use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("degenerate problem: {0}")]
    Degenerate(String),
    #[error("breakdown: {0}")]
    Breakdown(String),
    #[error("system of size {size} exceeds the dense limit {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
