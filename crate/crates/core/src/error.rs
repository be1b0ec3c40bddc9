use thiserror::Error;

use crate::parser::TaskKind;

#[derive(Debug, Error)]
pub enum RltError {
    #[error("group must contain at least 2 rewards, got {0}")]
    GroupTooSmall(usize),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input for {0}")]
    Empty(&'static str),

    #[error("task mismatch: expected {expected}, found {found}")]
    TaskMismatch { expected: TaskKind, found: TaskKind },

    #[error("payload does not match task {0}")]
    PayloadMismatch(TaskKind),

    #[error("ground truth for {task} is missing {field}")]
    MissingGroundTruth { task: TaskKind, field: &'static str },

    #[error("operation `{op}` does not apply to task {task}")]
    UnsupportedTask { op: &'static str, task: TaskKind },

    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("non-finite gradient at step {step}: {detail}")]
    NonFiniteGradient { step: usize, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RltError>;
