use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("token index {index} outside vocabulary of size {size}")]
    TokenOutOfRange { index: usize, size: usize },

    #[error("position {position} out of range for transcript of length {len}")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("invalid attention trace: {0}")]
    Trace(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("prefix {0:?} not present in model table and fallback is disabled")]
    UnknownPrefix(Vec<usize>),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("search space of {size} sequences exceeds the guard of {limit}")]
    SearchSpace { size: u128, limit: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
