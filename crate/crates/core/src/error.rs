use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("channel row {row} has a negative or out-of-range entry")]
    NegativeEntry { row: usize },

    #[error("channel row {row} sums to {sum}, expected 1")]
    RowSumMismatch { row: usize, sum: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid privacy budget {0}")]
    InvalidBudget(f64),

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("value {0} is not in the domain")]
    ValueNotInDomain(f64),

    #[error("output index {0} has zero probability under the channel and prior")]
    UnreachableOutput(usize),

    #[error("epsilon must be strictly positive for this estimator")]
    ZeroEpsilon,

    #[error("estimator denominator vanishes (epsilon = 0)")]
    ZeroDenominator,

    #[error("family {family} cannot be used for {task}")]
    UnsupportedPairing { family: String, task: String },

    #[error("search exceeded its budget of {0} sweeps")]
    BudgetExceeded(usize),

    #[error("no feasible point found")]
    NoFeasiblePoint,

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("missing column {0}")]
    MissingColumn(String),

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for this error: 3 for infeasible or unreachable
    /// outcomes, 2 for everything caused by bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnreachableOutput(_)
            | Error::NoFeasiblePoint
            | Error::BudgetExceeded(_)
            | Error::InternalInconsistency(_) => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
