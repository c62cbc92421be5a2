use thiserror::Error;

/// Errors produced by the sketching library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("bad dimensions: {0}")]
    BadDims(String),

    #[error("matrix is numerically rank deficient (smin/smax = {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("hausdorff distance of an empty set")]
    EmptySet,

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("invalid sketch parameters: {0}")]
    BadParams(String),

    #[error("osnap needs s = pm to be an integer dividing m (m = {m}, pm = {pm})")]
    DivisibilityViolated { m: usize, pm: f64 },

    #[error("{what} must be a positive integer, got {value}")]
    NonIntegerCount { what: &'static str, value: f64 },

    #[error("leverage scores are required for {0}")]
    ScoresMissing(&'static str),

    #[error("column {column}: nonzero probability {prob} exceeds 1")]
    ProbabilityOverflow { column: usize, prob: f64 },

    #[error("all sampling weights are zero")]
    AllZeroWeights,

    #[error("mini-batch size must be at least 1")]
    EmptyBatch,

    #[error("row {row}: sampling probability {prob:e} is below the required {required:e}")]
    ScoreViolation { row: usize, prob: f64, required: f64 },

    #[error("inconsistent stage dimensions: {0}")]
    StageDimsInconsistent(String),

    #[error("line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: usize, column: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            msg: msg.into(),
        }
    }
}
