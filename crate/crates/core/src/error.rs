//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("kernel is singular at coincident points")]
    Singular,
    #[error("integral diverges: {0}")]
    Divergent(String),
    #[error("profiles live on incompatible grids and no re-gridding rule was supplied")]
    IncompatibleGrids,
    #[error("operation not supported for this variant: {0}")]
    Unsupported(String),
    #[error("numerical resolution insufficient: {0}")]
    UnderResolved(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("manifest error at {field}: {reason}")]
    Manifest { field: String, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
