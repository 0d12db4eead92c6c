use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged: {0}")]
    TrainingDiverged(String),
    #[error("gradient check invalid: {0}")]
    CheckInvalid(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
