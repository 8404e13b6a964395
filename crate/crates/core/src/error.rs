use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv parse error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid rule configuration: {0}")]
    Rules(String),

    #[error("unknown question id `{0}`")]
    UnknownQuestion(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("undefined input: {0}")]
    UndefinedInput(&'static str),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
