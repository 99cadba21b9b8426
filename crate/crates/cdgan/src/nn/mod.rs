//! A small, deterministic convolutional-network core with hand-derived
//! backward passes. Everything runs in f64 so analytic gradients can be
//! verified against central finite differences.

mod adam;
mod conv;
mod init;
mod layer;
mod network;
mod norm;
mod params;
mod resblock;

pub use adam::Adam;
pub use conv::{Conv2d, ConvTranspose2d, PadMode};
pub use init::init_weights;
pub use layer::{Cache, Layer, LeakyRelu, ParamKind, ParamVisit, Relu, Tanh};
pub use network::{Network, Tape};
pub use norm::InstanceNorm2d;
pub use params::{Archive, ParameterStore, TensorData, ARCHIVE_VERSION};
pub use resblock::ResidualBlock;

/// A single feature map or image, laid out as (channels, height, width).
pub type Feat = ndarray::Array3<f64>;
