use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot index {path}: {source}")]
    Index {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stale event #{seq} ({kind}) for {path}")]
    StaleEvent {
        seq: u64,
        kind: &'static str,
        path: String,
    },

    #[error("out-of-order event: expected seq {expected}, got {got}")]
    Sequence { expected: u64, got: u64 },

    #[error("{0} not found")]
    NotFound(String),

    #[error("budget of {budget} tokens cannot hold the mandatory prompt blocks ({required} tokens)")]
    Budget { budget: usize, required: usize },

    #[error("backend error after {attempts} attempt(s): {message}")]
    Backend {
        message: String,
        retryable: bool,
        attempts: u32,
    },

    #[error("malformed model response: {reason}")]
    MalformedResponse { raw: String, reason: String },

    #[error("suggestion {id} is {status}, not pending")]
    InvalidTransition { id: String, status: String },

    #[error("patch for suggestion {id} no longer applies to {path}")]
    Conflict { id: String, path: String },

    #[error("impossible corpus spec: {0}")]
    Spec(String),

    #[error("failed to load {path}: {record}: {reason}")]
    Load {
        path: PathBuf,
        record: String,
        reason: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
