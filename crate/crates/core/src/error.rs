use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid configuration `{key}`: {message}")]
    InvalidConfig { key: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-differentiable test function: {0}")]
    NonDifferentiable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
