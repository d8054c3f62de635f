use alloc::string::String;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid block structure: {0}")]
    InvalidStructure(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("block index {index} out of range for {blocks} blocks")]
    IndexOutOfRange { index: usize, blocks: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("enumeration of {supports} supports exceeds the limit of {limit}")]
    Capacity { supports: u64, limit: u64 },
    #[error("problem is infeasible: distance {residual:e} from y to the range of A exceeds epsilon {epsilon:e}")]
    Infeasible { residual: f64, epsilon: f64 },
    #[error("recovery condition violated: delta {delta} >= threshold {threshold}")]
    HypothesisViolated { delta: f64, threshold: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("counterexample invalid: {0}")]
    CounterexampleInvalid(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid_arg {
    ($($arg:tt)*) => {
        $crate::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid_arg;
