//! Crate-wide error type.

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("instance too large for exhaustive enumeration: n = {n}, limit = {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("model is not attractive: J[{a},{b}] = {value}")]
    NotAttractive { a: usize, b: usize, value: f64 },
    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig}")]
    NotPsd { min_eig: f64 },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("infeasible input: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
