use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("expected {expected} counts for dims {dims:?}, found {found}")]
    CountMismatch {
        dims: Vec<usize>,
        expected: usize,
        found: usize,
    },

    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("constraint matrix is rank deficient")]
    RankDeficient,

    #[error("non-positive aggregated probability at row {0}")]
    NonPositiveMargin(usize),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("target probability {target} is outside the achievable range [{lo}, {hi}]")]
    UnreachableTarget { target: f64, lo: f64, hi: f64 },

    #[error("exact weights are infeasible for k = {0} > 15 inequalities; use Monte Carlo weights")]
    TooManyConstraints(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
