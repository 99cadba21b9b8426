use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {left:?} vs {right:?}")]
    ShapeMismatch {
        context: String,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("value {value} outside the {range} range")]
    OutOfRange { value: f64, range: &'static str },

    #[error("invalid image geometry: channels={channels}, height={height}, width={width}")]
    BadGeometry {
        channels: usize,
        height: usize,
        width: usize,
    },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("spatial size {height}x{width} must be divisible by {divisor} for the generator's down/up-sampling stack")]
    Indivisible {
        height: usize,
        width: usize,
        divisor: usize,
    },

    #[error("input {height}x{width} is smaller than the discriminator's receptive field ({receptive_field} px): layer `{layer}` would produce an empty output")]
    InputTooSmall {
        height: usize,
        width: usize,
        receptive_field: usize,
        layer: String,
    },

    #[error("loss term {term} is active but its input `{input}` was not provided")]
    MissingLossInput {
        term: &'static str,
        input: &'static str,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid layer spec: {0}")]
    LayerSpec(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("epoch {epoch} outside the schedule range 0..={max}")]
    EpochOutOfRange { epoch: usize, max: usize },

    #[error("metric error: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image file error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape_mismatch(context: impl Into<String>, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
