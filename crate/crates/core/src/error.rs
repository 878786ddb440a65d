use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the core crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("knowledge base line {line}: {msg}")]
    KbParse { line: usize, msg: String },

    #[error("knowledge base: no objects")]
    KbEmpty,

    #[error("knowledge base: duplicate edge ({object}, {location})")]
    KbDuplicate { object: String, location: String },

    #[error("knowledge base: dangling name {0:?}")]
    KbDangling(String),

    #[error("unknown object {0:?}")]
    UnknownObject(String),

    #[error("unknown human {0:?}")]
    UnknownHuman(String),

    #[error("malformed owner-qualified head {0:?}")]
    MalformedHead(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{kind} memory overflow (capacity {capacity})")]
    MemoryOverflow { kind: &'static str, capacity: usize },

    #[error("short-term memory is empty")]
    EmptyShortTerm,

    #[error("prefill target must be an empty semantic memory")]
    PrefillTarget,

    #[error("episode already finished")]
    EpisodeDone,

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("untokenizable entity {0:?}")]
    Untokenizable(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for vocabulary of {vocab}")]
    IndexOutOfRange { index: usize, vocab: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
