use thiserror::Error;

/// Errors raised by the geometric and algebraic operations of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("indeterminate scale: {0}")]
    ZeroVector(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("rank-deficient matrix: {0}")]
    RankDeficient(String),

    #[error("fit is not unique (singular gap {gap:.3e} >= {threshold:.1e})")]
    NonUniqueFit { gap: f64, threshold: f64 },

    #[error("insufficient rank: have {have}, need {need} (per-view ranks {per_view:?})")]
    InsufficientRank {
        have: usize,
        need: usize,
        per_view: Vec<usize>,
    },

    #[error("invalid probe line: {0}")]
    InvalidProbe(String),

    #[error("genericity violation: {0}")]
    NonGeneric(String),

    #[error("refinement failed after {iterations} iterations with residual {residual:.3e}")]
    RefinementFailed { iterations: usize, residual: f64 },

    #[error("model rejected: residual {residual:.3e} above tolerance {tol:.1e}")]
    Rejected { residual: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown preset curve `{0}`")]
    UnknownPreset(String),
}

pub type Result<T> = std::result::Result<T, Error>;
