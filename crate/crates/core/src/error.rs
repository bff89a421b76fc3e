use thiserror::Error;

use crate::funcjet::FuncError;

/// Evaluation failures shared by the metric family, tensor calculus and the
/// checks built on them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Function(#[from] FuncError),
    #[error("characteristic roots {first} and {second} collide (|Δ| = {gap:e} ≤ {tol:e})")]
    RootCollision {
        first: &'static str,
        second: &'static str,
        gap: f64,
        tol: f64,
    },
    #[error("{which} vanishes (|{which}| = {value:e})")]
    ZeroA { which: &'static str, value: f64 },
    #[error("degenerate metric (normalized determinant {ratio:e})")]
    DegenerateMetric { ratio: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid {field}: {message}")]
    InvalidField {
        field: &'static str,
        message: String,
    },
    #[error("{0}")]
    Unsupported(String),
}

impl GeometryError {
    /// Errors that mark a point as outside the validity region (as opposed to
    /// misuse of the API).
    pub fn is_domain_error(&self) -> bool {
        matches!(
            self,
            GeometryError::Function(_)
                | GeometryError::RootCollision { .. }
                | GeometryError::ZeroA { .. }
                | GeometryError::DegenerateMetric { .. }
                | GeometryError::NonFinite(_)
        )
    }
}
