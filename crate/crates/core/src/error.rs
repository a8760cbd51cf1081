use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("vector is not in the domain of the generator: {0}")]
    DomainViolation(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between {0}")]
    GridMismatch(&'static str),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("ensemble of {found} paths is too small, need at least {required}")]
    InsufficientEnsemble { required: usize, found: usize },

    #[error("solution diverged at step {step}")]
    Diverged { step: usize },

    #[error("Picard iteration did not converge in {iterations} iterations (last difference {last:e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("degenerate chart at y = {y:?}: smallest singular value {sigma_min:e}")]
    DegenerateChart { y: Vec<f64>, sigma_min: f64 },

    #[error("point is off the chart patch (consistency defect {defect:e})")]
    OffManifold { defect: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
