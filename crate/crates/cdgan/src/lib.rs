//! Training, evaluation, and ablation toolkit for cyclic-discriminative
//! GAN image-to-image transformation: two generators, two patch
//! discriminators, ten composable loss terms behind named presets, the
//! published training schedule, and the four image-quality metrics used
//! for evaluation.

pub mod ablate;
pub mod data;
pub mod error;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod nn;
pub mod presets;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use image::{ImageTensor, PairedSample, ValueRange};
pub use nn::Feat;
pub use presets::{preset, preset_by_name, LossPreset, LossTerm, LossWeights, PresetName};
