//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by model construction, the algorithm loop, solvers and
/// diagnostics.
#[derive(Debug, Error)]
pub enum DasfError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown signal name `{0}`; declared signals: {1}")]
    UnknownSignal(String, String),

    #[error("insufficient samples: need at least {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("operation `{op}` is not supported by this problem: {reason}")]
    Capability { op: &'static str, reason: String },

    #[error("degenerate point: {0}")]
    DegeneratePoint(String),

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("incomplete aggregation: missing payload from node {0}")]
    IncompleteAggregation(usize),

    #[error("local solver diverged at iteration {iteration}: {reason}")]
    SolverDivergence { iteration: usize, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("infeasible point: constraint {index} violated by {violation:.3e}")]
    InfeasiblePoint { index: usize, violation: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("certificate unavailable: {0}")]
    CertificateUnavailable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DasfError>;
