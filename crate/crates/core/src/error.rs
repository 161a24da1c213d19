use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e}); consider a jitter")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("secular function evaluated at a pole (lambda = {0})")]
    Pole(f64),

    #[error("root finder did not converge after {iterations} iterations (best = {best}, residual = {residual:e})")]
    Convergence {
        iterations: usize,
        best: f64,
        residual: f64,
    },

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("linear term is zero")]
    ZeroLinearTerm,

    #[error("no well-conditioned regressor subset found after {0} tries")]
    DegenerateRegressor(usize),

    #[error("degenerate structure: {0}")]
    DegenerateStructure(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
