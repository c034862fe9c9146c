use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("region mismatch: {0}")]
    RegionMismatch(String),
    #[error("size cap exceeded: {what} needs {needed}, cap is {cap}")]
    SizeCap { what: String, needed: u64, cap: u64 },
    #[error("coordinates out of representable bounds")]
    OutOfBounds,
    #[error("not absolutely continuous: {0}")]
    NotAbsolutelyContinuous(String),
    #[error("engine failure: {0}")]
    Engine(String),
    #[error("budget exhausted: {0}")]
    Budget(String),
    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),
    #[error("ambiguous match: {0}")]
    Ambiguous(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
