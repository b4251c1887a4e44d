use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),

    #[error("attribute {attr:?} overflows 64 bits at row {row}")]
    ValueOverflow { row: usize, attr: String },

    #[error("aggregation needs an attribute but none was given")]
    MissingAggregateAttribute,

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty workload")]
    EmptyWorkload,

    #[error("need at least {need} training examples for {target}, got {got}")]
    InsufficientExamples {
        target: &'static str,
        need: usize,
        got: usize,
    },

    #[error("build budget exceeded: {0}")]
    BuildBudget(String),

    #[error("result mismatch for query {query} between {lhs} and {rhs}: {detail}")]
    ResultMismatch {
        query: usize,
        lhs: String,
        rhs: String,
        detail: String,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
