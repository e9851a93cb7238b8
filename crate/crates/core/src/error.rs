use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("algebra mismatch: {0}")]
    AlgebraMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("order {got} exceeds cap {cap}")]
    OrderCap { got: usize, cap: usize },

    #[error("covariance not positive semidefinite: min eigenvalue {0}")]
    NotPsd(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("evaluation point {x} beyond extrapolation policy (max {max})")]
    ExtrapolationPolicy { x: f64, max: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
