use thiserror::Error;

/// Errors raised by the valuation engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (Cholesky failed at pivot {pivot})")]
    SingularMatrix { pivot: usize },

    #[error("rank deficient: {samples} samples cannot span dimension {dim}")]
    RankDeficient { samples: usize, dim: usize },

    #[error("insufficient data: {n} samples for dimension {p}")]
    InsufficientData { n: usize, p: usize },

    #[error("IRLS did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("prediction saturated: pi = {pi:e}, weight below 1e-12")]
    Saturation { pi: f64 },

    #[error("bandwidth selection failed: {0}")]
    BandwidthSelection(String),

    #[error("utility evaluation failed on a subset of size {subset_size}: {reason}")]
    UtilityEvaluation { subset_size: usize, reason: String },

    #[error("exact enumeration refused for {n} players (limit {max}); use the Monte-Carlo baseline")]
    TooManyPlayers { n: usize, max: usize },

    #[error("baseline failed: {failures} of {draws} utility evaluations failed")]
    BaselineFailure { failures: usize, draws: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
