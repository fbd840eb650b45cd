use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("I/O error on {path}: {source}")]
    IoPath {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("invalid item id {0:?}")]
    InvalidItemId(String),

    #[error("{kind}: bad magic header, not an artifact of this type")]
    BadMagic { kind: &'static str },

    #[error("{kind}: format version {found} is not supported (expected {expected})")]
    VersionMismatch {
        kind: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("serialization error: {0}")]
    Encode(#[from] bincode::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("fst error: {0}")]
    Fst(#[from] fst::Error),

    #[error("no nodes")]
    EmptyGraph,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty feature matrix")]
    EmptyMatrix,

    #[error("degenerate labels: training data needs both positive and negative candidates")]
    DegenerateLabels,

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset document {document}: {message}")]
    Dataset { document: usize, message: String },
}
