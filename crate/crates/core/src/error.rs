use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge references unknown transaction id {0}")]
    UnknownEndpoint(u64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("node index {index} out of range for graph with {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("feature view needs {needed} columns, matrix has {available}")]
    InsufficientColumns { needed: usize, available: usize },

    #[error("{}:{line}: malformed row: {reason}", path.display())]
    MalformedRow {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{}:{line}: unknown class token {token:?}", path.display())]
    UnknownClassToken {
        path: PathBuf,
        line: u64,
        token: String,
    },

    #[error("edge {src} -> {dst} crosses time steps {src_step} and {dst_step}")]
    CrossTimestepEdge {
        src: u64,
        dst: u64,
        src_step: u32,
        dst_step: u32,
    },

    #[error("duplicate transaction id {0}")]
    DuplicateTxId(u64),

    #[error("invalid temporal split: train_count {train_count} with {graphs} graphs")]
    BadSplit { train_count: usize, graphs: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("batch norm needs at least one row")]
    EmptyBatch,

    #[error("readout over an empty graph")]
    EmptyGraph,

    #[error("loss needs at least one positive and one negative score")]
    EmptyScores,

    #[error("misaligned inputs: {0}")]
    Misalignment(String),

    #[error("no labeled rows to train on")]
    EmptyTrainingSet,

    #[error("auc needs both classes present")]
    SingleClass,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("artifact version mismatch: expected magic {expected:?}, found {found:?}")]
    VersionMismatch { expected: String, found: String },

    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    /// Process exit code for the CLI: 1 input error, 2 artifact error, 3 invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::VersionMismatch { .. } | Error::CorruptArtifact(_) => 2,
            Error::Invariant(_) => 3,
            _ => 1,
        }
    }
}
