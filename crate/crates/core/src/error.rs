use thiserror::Error;

/// Failure modes shared by every module of the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("truncation error: {0}")]
    Truncation(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("no parametrix: {0}")]
    NoParametrix(String),
    #[error("invalid contour: {0}")]
    InvalidContour(String),
    #[error("point lies outside the tube: {0}")]
    OutOfTube(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
