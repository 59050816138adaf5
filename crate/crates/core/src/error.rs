use thiserror::Error;

#[derive(Debug, Error)]
pub enum LedError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported sampler: {0}")]
    UnsupportedSampler(String),
    #[error("weight file: {0}")]
    WeightFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LedError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LedError::InvalidConfig(msg.into()))
}
