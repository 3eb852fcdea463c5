use thiserror::Error;

/// Errors raised by the operator toolkit.
///
/// Index fields are zero-based; `Display` renders them one-based to match
/// the documentation convention for operator coordinates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QsoError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("degenerate difference: arguments coincide (l1 distance {distance:e})")]
    DegenerateDifference { distance: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("NegativeEntry (i={},j={},k={}): {value}", .i + 1, .j + 1, .k + 1)]
    NegativeEntry {
        i: usize,
        j: usize,
        k: usize,
        value: f64,
    },

    #[error("RowNotStochastic (i={},j={}): row sums to {sum}", .i + 1, .j + 1)]
    RowNotStochastic { i: usize, j: usize, sum: f64 },

    #[error("AsymmetricEntry (i={},j={},k={}): |q_ijk - q_jik| = {gap:e}", .i + 1, .j + 1, .k + 1)]
    AsymmetricEntry {
        i: usize,
        j: usize,
        k: usize,
        gap: f64,
    },

    #[error("non-finite entry at (i={},j={},k={})", .i + 1, .j + 1, .k + 1)]
    NonFiniteEntry { i: usize, j: usize, k: usize },

    #[error("invalid window range [{m}, {n}]")]
    InvalidRange { m: usize, n: usize },

    #[error("seed is not invariant: ||Q(f) - f||_1 = {residual:e}")]
    NotInvariantSeed { residual: f64 },

    #[error("operators coincide; ratio undefined")]
    IdenticalOperators,

    #[error("operator is not norm mixing at tolerance {tol:e} (residual {residual:e})")]
    NotNormMixing { residual: f64, tol: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, QsoError>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(QsoError::DimensionMismatch { expected, found })
    }
}
