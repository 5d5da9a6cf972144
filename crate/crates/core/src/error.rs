use thiserror::Error;

/// Errors raised by the tabular game machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpgError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, MpgError>;

pub(crate) fn invalid(msg: impl Into<String>) -> MpgError {
    MpgError::InvalidArgument(msg.into())
}
