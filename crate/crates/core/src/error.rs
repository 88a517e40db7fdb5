use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("architecture mismatch: {0}")]
    Architecture(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("singular factorization: {0}")]
    Singular(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("enumeration cap exceeded: {count} strategy pairs > cap {cap}")]
    Cap { count: u128, cap: u128 },
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Param(msg.into())
}
