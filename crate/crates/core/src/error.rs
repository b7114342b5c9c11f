use thiserror::Error;

/// Errors raised by the sparse-group SLOPE library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SgsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid group partition: {0}")]
    InvalidPartition(String),

    #[error("binomial response must be 0 or 1, found {value} at row {row}")]
    InvalidResponse { row: usize, value: f64 },

    #[error("column {0} is constant and cannot be standardized")]
    ConstantColumn(usize),

    #[error("need at least {required} rows, have {available}")]
    TooFewRows { required: usize, available: usize },

    #[error("penalty weights must be non-negative and non-increasing (violated at index {0})")]
    WeightOrderViolation(usize),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("FDR level must lie in (0, 1), got {0}")]
    InvalidFdrLevel(f64),

    #[error("alpha = {alpha} is outside the range allowed here ({allowed})")]
    AlphaOutOfRange { alpha: f64, allowed: &'static str },

    #[error("could not bracket the root of the averaged CDF at target {target}")]
    RootBracketFailure { target: f64 },

    #[error("gradient vanishes at the starting point")]
    ZeroGradient,

    #[error("loss evaluation overflowed")]
    NumericalOverflow,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("fold {fold} has too few rows ({rows})")]
    FoldTooSmall { fold: usize, rows: usize },

    #[error("support oscillates between {previous:?} and {current:?}")]
    SupportCycle {
        previous: Vec<usize>,
        current: Vec<usize>,
    },

    #[error("residual degrees of freedom n - |S| - 1 = {0} < 1")]
    DegenerateResidual(i64),

    #[error("inconsistent scenario: {0}")]
    InconsistentScenario(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, SgsError>;
