use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in `{block}` during training")]
    NonFinite { block: String },

    #[error("checkpoint version mismatch: {0}")]
    Version(String),

    #[error("checkpoint truncated: {0}")]
    Truncated(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("vocabulary mismatch: {0}")]
    Vocabulary(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
