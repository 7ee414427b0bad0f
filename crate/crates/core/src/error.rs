use thiserror::Error;

use crate::fields::Weight;

/// Why a solve was abandoned as divergent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum DivergenceKind {
    /// Total background curvature is non-negative on a closed chart, so no
    /// critical point exists for negative lambda.
    GaussBonnet,
    /// An iterate left the admissible range of the conformal exponent.
    Guard,
    /// Non-finite value encountered.
    NonFinite,
}

#[derive(Debug, Error)]
pub enum CmcError {
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("field mismatch: {0}")]
    FieldMismatch(String),
    #[error("weight mismatch: expected {expected}, found {found}")]
    WeightMismatch { expected: Weight, found: Weight },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("diverging iterate ({kind:?}): {detail}")]
    Diverging { kind: DivergenceKind, detail: String },
    #[error("newton iteration limit reached after {iterations} steps (gradient norm {grad_norm:e})")]
    MaxIterations { iterations: usize, grad_norm: f64 },
    #[error("line search failed at newton step {iteration} (gradient norm {grad_norm:e})")]
    LineSearch { iteration: usize, grad_norm: f64 },
    #[error("conjugate gradient breakdown: Rayleigh quotient {rayleigh:e} (operator not positive definite; lambda >= 0?)")]
    CgBreakdown { rayleigh: f64 },
    #[error("continuation stalled: step floor reached after last good t = {last_t}")]
    ContinuationStalled { last_t: f64 },
    #[error("degenerate KKT system: {0}")]
    Kkt(String),
    #[error("side pairing check failed for generator {generator}: {detail}")]
    Pairing { generator: usize, detail: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CmcError>;
