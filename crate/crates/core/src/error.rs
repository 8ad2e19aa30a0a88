use thiserror::Error;

/// Errors raised by the numerical kernels and engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (smallest eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),

    #[error("{0} failed to converge")]
    NoConvergence(&'static str),

    #[error("sample covariance is singular (eigenvalue ratio {0:.3e}); horizon too short or trajectory degenerate")]
    SingularCovariance(f64),

    #[error("A is not diagonalizable: {0}")]
    NotDiagonalizable(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported Schatten exponent {0}; expected 2, 4 or inf")]
    UnsupportedSchatten(String),

    #[error("{failed} of {trials} Monte Carlo trials had a singular sample covariance")]
    TooManyFailedTrials { failed: usize, trials: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
