use thiserror::Error;

/// Errors raised across the contraction pipeline.
///
/// State indices carried by variants are 0-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("negative rate K[{row}][{col}] = {value}")]
    NegativeRate { row: usize, col: usize, value: f64 },

    #[error(
        "detailed balance violated at ({row}, {col}): relative residual {residual:e} exceeds {tolerance:e}"
    )]
    DetailedBalanceViolation {
        row: usize,
        col: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("stationary weight pi[{state}] = {value} is not positive")]
    NonpositivePi { state: usize, value: f64 },

    #[error("sparsity pattern is not symmetric: K[{row}][{col}] != 0 but K[{col}][{row}] == 0")]
    AsymmetricPattern { row: usize, col: usize },

    #[error("invalid entry: {0}")]
    InvalidEntry(String),

    #[error("pivot {state} has non-positive diagonal {value:e} at elimination time")]
    SingularPivot { state: usize, value: f64 },

    #[error("prefix determinant is zero")]
    SingularPrefix,

    #[error("remaining diagonal {value:e} of state {state} is negative (input not PSD)")]
    NegativeDiagonal { state: usize, value: f64 },

    #[error("oracle precondition failed: {0}")]
    OracleOutOfRange(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("negative leaf value {0}")]
    NegativeLeaf(f64),

    #[error("factor pivot order does not match the greedy result")]
    IncompatibleFactor,

    #[error("network is disconnected into {} components", components.len())]
    DisconnectedNetwork { components: Vec<Vec<usize>> },

    #[error("zero pivot in column {0} of the Cholesky factor")]
    ZeroPivotColumn(usize),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
