use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: malformed record: {reason}")]
    Ingest {
        source_name: String,
        line: usize,
        reason: String,
    },

    #[error("unknown entity id {0}")]
    UnknownEntity(u32),

    #[error("unknown entity `{0}`")]
    UnknownLabel(String),

    #[error("required file {} is missing", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: entity `{label}` does not exist in the {side} graph", path.display())]
    DanglingReference {
        path: PathBuf,
        line: usize,
        label: String,
        side: &'static str,
    },

    #[error("invalid alignment seed: {0}")]
    Seed(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("state directory: {0}")]
    State(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
