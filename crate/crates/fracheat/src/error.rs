use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spectrum does not admit a solution: {0}")]
    NonExistent(String),

    #[error("quadrature failed to converge: value {value:.6e}, residual {residual:.3e}")]
    QuadNonConvergence { value: f64, residual: f64 },

    #[error("covariance matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("optimizer stalled: duality gap {gap:.3e} after {iters} iterations")]
    OptimizerStalled { gap: f64, iters: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
