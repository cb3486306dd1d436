use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension must be at least 3, got {0}")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular point: {0}")]
    Singularity(String),

    #[error("point outside the domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },

    #[error("transform evaluated on its singular locus (modulus {0:e})")]
    SingularLocus(f64),

    #[error("quadrature did not converge: error {error:e} after {evaluations} evaluations")]
    NonConvergence {
        estimate: Vec<f64>,
        error: f64,
        evaluations: usize,
    },

    #[error("far-field extrapolation unstable (relative spread {0:e})")]
    Estimation(f64),

    #[error("profile never changes sign")]
    DegenerateProfile,

    #[error("outside the admissible regime: {0}")]
    Regime(String),

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("fit rejected: {0}")]
    Fit(String),

    #[error("optimizer stopped after {iterations} iterations with gradient norm {grad_norm:e}")]
    Optimizer {
        iterations: usize,
        grad_norm: f64,
        trace: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
