use thiserror::Error;

/// Errors raised across label encoding, ingestion, estimation and scoring.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label space: {0}")]
    LabelSpace(String),

    #[error("unknown label value {0:?}")]
    UnknownLabel(String),

    #[error("value {value} outside the binned range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("empty answer after normalization")]
    EmptyAnswer,

    #[error("schema error at record {record}: {message}")]
    Schema { record: usize, message: String },

    #[error("record {record}: {field} = {value} outside [0, 5]")]
    RatingRange {
        record: usize,
        field: &'static str,
        value: i64,
    },

    #[error("duplicate record for key {0}")]
    Duplicate(String),

    #[error("item {item} is missing {what}")]
    MissingCondition { item: String, what: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("oracle cannot enumerate: {0}")]
    OracleTooLarge(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
