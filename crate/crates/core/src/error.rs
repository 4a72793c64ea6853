use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A parameter combination cannot be realised (non-integer extents, bad options).
    #[error("configuration error: {0}")]
    Config(String),
    /// API misuse such as calling backward on a non-scalar.
    #[error("usage error: {0}")]
    Usage(String),
    /// Invalid input data (negative intensities, malformed files).
    #[error("input error: {0}")]
    Input(String),
    /// A NaN or infinity was produced.
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
