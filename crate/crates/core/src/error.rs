use thiserror::Error;

/// Errors raised by the bound pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrbError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("Fisher information is singular or ill-conditioned (condition number {condition:e})")]
    SingularFisher { condition: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("quadrature grid of {points} points exceeds the budget of {budget}")]
    GridBudget { points: u128, budget: u128 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("closed-form expectations are not available for {0}")]
    ClosedFormUnavailable(String),

    #[error("Gauss-Hermite quadrature requires a Gaussian sampling law")]
    QuadratureUnavailable,

    #[error("direction must be nonzero")]
    ZeroDirection,

    #[error("direction set is empty")]
    EmptyDirections,
}

pub type Result<T> = std::result::Result<T, CrbError>;
