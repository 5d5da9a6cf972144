use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriveError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("policy fault at step {step}: {msg}")]
    PolicyFault { step: usize, msg: String },
    #[error("numerical fault at step {step}: {msg}")]
    NumericalFault { step: usize, msg: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, DriveError>;

pub(crate) fn invalid(msg: impl Into<String>) -> DriveError {
    DriveError::InvalidArgument(msg.into())
}
