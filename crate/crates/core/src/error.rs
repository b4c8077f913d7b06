use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),
    #[error("quadrature did not converge: {0}")]
    NonConvergence(String),
    #[error("grid is under-resolved: {0}")]
    Resolution(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("zero test function")]
    ZeroFunction,
}

pub type Result<T> = std::result::Result<T, Error>;
