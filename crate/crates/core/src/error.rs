use thiserror::Error;

pub type Result<T> = std::result::Result<T, ReserveError>;

/// Broad class of a failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// The input data violates a structural or domain requirement.
    Data,
    /// A numerical procedure failed on otherwise valid data.
    Numerical,
    /// A caller-supplied argument is out of range.
    Usage,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReserveError {
    #[error("input contains no triangle rows")]
    EmptyInput,

    #[error("cell at row {row}, column {column} is not a finite number: {value:?}")]
    NonNumericCell {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("observed region is not an upper-left triangle: {0}")]
    RaggedShape(String),

    #[error("payment for origin {origin}, development {dev} must be positive, got {value}")]
    NonPositivePayment {
        origin: usize,
        dev: usize,
        value: f64,
    },

    #[error("triangle with k = {k} is too small, need k >= {min}")]
    TriangleTooSmall { k: usize, min: usize },

    #[error("origin label count {got} does not match k = {k}")]
    LabelCount { got: usize, k: usize },

    #[error("no residual degrees of freedom: n = {n}, p = {p}")]
    DegreesOfFreedomExhausted { n: usize, p: usize },

    #[error("matrix is numerically singular (rank {rank} < {dim})")]
    Singular { rank: usize, dim: usize },

    #[error("iteration did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("dispersion statistic has zero variance")]
    ZeroVariance,

    #[error("dispersion test requires a maximum-likelihood fit")]
    RequiresMle,

    #[error("membership queried on a side with zero spread at x = {x}")]
    ZeroSpreadQuery { x: f64 },

    #[error("h must lie in [0, 1], got {0}")]
    HOutOfRange(f64),

    #[error("risk-aversion parameter must lie in [0, 1], got {0}")]
    PiOutOfRange(f64),

    #[error("cannot sum an empty sequence of fuzzy numbers")]
    EmptySequence,

    #[error("invalid triangular fuzzy number ({left}, {center}, {right}): {reason}")]
    InvalidFuzzyNumber {
        left: f64,
        center: f64,
        right: f64,
        reason: &'static str,
    },

    #[error(
        "fuzzification makes the left channel non-positive at origin {origin}, development {dev}"
    )]
    NonPositiveLeftChannel { origin: usize, dev: usize },

    #[error("fuzzy total sum of squares is zero")]
    DegenerateVariance,

    #[error("triangle has no unobserved cells to predict")]
    NothingToPredict,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl ReserveError {
    pub fn category(&self) -> ErrorCategory {
        use ReserveError::*;
        match self {
            EmptyInput
            | NonNumericCell { .. }
            | RaggedShape(_)
            | NonPositivePayment { .. }
            | TriangleTooSmall { .. }
            | LabelCount { .. }
            | DegreesOfFreedomExhausted { .. }
            | NonPositiveLeftChannel { .. }
            | NothingToPredict
            | InvalidFuzzyNumber { .. } => ErrorCategory::Data,
            Singular { .. } | NotConverged { .. } | ZeroVariance | DegenerateVariance => {
                ErrorCategory::Numerical
            }
            RequiresMle
            | ZeroSpreadQuery { .. }
            | HOutOfRange(_)
            | PiOutOfRange(_)
            | EmptySequence
            | DimensionMismatch(_)
            | InvalidConfig(_) => ErrorCategory::Usage,
        }
    }
}
