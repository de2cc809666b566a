use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum QaeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian: residual {residual:.3e} exceeds tol {tol:.3e}")]
    NotHermitian { residual: f64, tol: f64 },

    #[error("matrix is not unitary: residual {residual:.3e} exceeds tol {tol:.3e}")]
    NotUnitary { residual: f64, tol: f64 },

    #[error("eigensolver failed to converge")]
    NoConvergence,

    #[error("control amplitude {value} outside [{min}, {max}] (control {control}, segment {segment})")]
    BoundsViolation {
        control: usize,
        segment: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("state combination has negligible norm")]
    ZeroVector,

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QaeError>;
