use thiserror::Error;

/// Errors raised by model validation, the analytic solvers and the simulator.
///
/// Row and column indices are zero-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("row {row} sums to {sum}")]
    RowSumViolation { row: usize, sum: f64 },

    #[error("matrix is not strictly sub-stochastic: {reason}")]
    NotStrictlySubstochastic { reason: String },

    #[error("invalid probability vector: {reason}")]
    InvalidProbabilityVector { reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular or ill-conditioned matrix in {0}")]
    SingularMatrix(&'static str),

    #[error("{what} = {value} outside [{min}, {max}]")]
    ArgumentOutOfRange {
        what: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },

    #[error("state {state} never leaves itself through an off-diagonal transition")]
    IsolatedState { state: usize },

    #[error("state {state} is absorbing (q_jj = 1)")]
    DegenerateState { state: usize },

    #[error("source transition matrix is not irreducible")]
    NotIrreducible,

    #[error("invalid penalty for state {state}: {reason}")]
    InvalidPenalty { state: usize, reason: String },

    #[error("policy evaluation system is singular")]
    SingularSystem,

    #[error("embedded chain induced by the policy is not unichain")]
    NotUnichain,

    #[error("search space of {size} policies exceeds the limit {limit}")]
    SearchSpaceTooLarge { size: u128, limit: u128 },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("sample size {requested} below the minimum {minimum}")]
    MinimumSampleSize { requested: u64, minimum: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotSquare { .. } => "NotSquare",
            Error::NonFinite { .. } => "NonFinite",
            Error::NegativeEntry { .. } => "NegativeEntry",
            Error::RowSumViolation { .. } => "RowSumViolation",
            Error::NotStrictlySubstochastic { .. } => "NotStrictlySubstochastic",
            Error::InvalidProbabilityVector { .. } => "InvalidProbabilityVector",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::SingularMatrix(_) => "SingularMatrix",
            Error::ArgumentOutOfRange { .. } => "ArgumentOutOfRange",
            Error::IsolatedState { .. } => "IsolatedState",
            Error::DegenerateState { .. } => "DegenerateState",
            Error::NotIrreducible => "NotIrreducible",
            Error::InvalidPenalty { .. } => "InvalidPenalty",
            Error::SingularSystem => "SingularSystem",
            Error::NotUnichain => "NotUnichain",
            Error::SearchSpaceTooLarge { .. } => "SearchSpaceTooLarge",
            Error::InvalidPolicy(_) => "InvalidPolicy",
            Error::MinimumSampleSize { .. } => "MinimumSampleSize",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }

    /// True for errors caused by an ill-formed model rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NotSquare { .. }
                | Error::NonFinite { .. }
                | Error::NegativeEntry { .. }
                | Error::RowSumViolation { .. }
                | Error::NotStrictlySubstochastic { .. }
                | Error::InvalidProbabilityVector { .. }
                | Error::DimensionMismatch(_)
                | Error::IsolatedState { .. }
                | Error::DegenerateState { .. }
                | Error::NotIrreducible
                | Error::InvalidPenalty { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
