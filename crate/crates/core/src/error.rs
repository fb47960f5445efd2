use alloc::string::String;

use crate::expr::ExprError;

/// Errors raised by model validation, certificate solving and the iteration drivers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("no positive definite quadratic constraint and no ball bound dx supplied")]
    MissingBallBound,

    #[error("invalid ball bound dx = {dx}: {reason}")]
    InvalidBallBound { dx: f64, reason: String },

    #[error("system is not Schur stable (spectral radius {radius})")]
    Unstable { radius: f64 },

    #[error("iteration budget exceeded: no certificate of termination after k = {k_max}")]
    IterationBudgetExceeded { k_max: usize },

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("quasi-smooth constraint {index} violates its quadratic envelope: {reason}")]
    EnvelopeViolation { index: usize, reason: String },

    #[error("invalid state transform: {0}")]
    InvalidTransform(String),

    #[error("polynomial degree {degree} is below 3; use the quadratic pipeline")]
    DegreeTooSmall { degree: usize },

    #[error("polynomial degree {degree} exceeds twice the basis grade {dbar}")]
    DegreeExceedsBasis { degree: usize, dbar: usize },

    #[error("brute-force oracle supports at most {max} family members, got {found}")]
    TooManyFamilyMembers { max: usize, found: usize },

    #[error("unsupported problem: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Expr(#[from] ExprError),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
