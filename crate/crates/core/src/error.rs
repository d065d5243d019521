use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian positive definite ({context})")]
    NotPositiveDefinite { context: &'static str },

    #[error("power iteration did not converge in {iters} iterations (best estimate {best})")]
    NoConvergence { iters: usize, best: f64 },

    #[error("invalid spectral interval [{lambda_min}, {lambda_max}]")]
    InvalidInterval { lambda_min: f64, lambda_max: f64 },

    #[error("horizon must be at least 1")]
    ZeroHorizon,

    #[error("brute-force minimax supports horizons 1..=3, got {0}")]
    HorizonTooLarge(usize),

    #[error("cell {cell} has zero transmit power")]
    ZeroPower { cell: usize },

    #[error("degenerate quadratic program in cell {cell}: identity coefficient is zero")]
    DegenerateOperator { cell: usize },

    #[error("invalid system configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, Error>;
