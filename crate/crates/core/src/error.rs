use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which end of the attainable range a saddlepoint target fell beyond.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeSide {
    Below,
    Above,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("weighted information matrix is not positive definite")]
    Factorization,

    #[error("null model did not converge after {iterations} iterations (max |score| = {max_score:e})")]
    FitNoConvergence { iterations: usize, max_score: f64 },

    #[error("separation: fitted probability {mu:e} for observation {index} is numerically 0 or 1")]
    Separation { index: usize, mu: f64 },

    #[error("saddlepoint target {target} lies outside the attainable range ({side:?})")]
    OutsideRange { target: f64, side: RangeSide },

    #[error("saddlepoint solver did not converge after {iterations} iterations (residual {residual:e})")]
    SaddleNoConvergence { iterations: usize, residual: f64 },

    #[error("method {method} is not applicable: {reason}")]
    MethodNotApplicable { method: String, reason: String },
}
