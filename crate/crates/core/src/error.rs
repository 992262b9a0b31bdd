use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompassError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid predicate: {0}")]
    InvalidPredicate(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("ground truth set is empty")]
    EmptyGroundTruth,

    #[error("record {0} was already visited")]
    AlreadyVisited(u32),

    #[error("cluster {cluster} out of range for {nlist} clusters")]
    InvalidCluster { cluster: usize, nlist: usize },

    #[error("malformed file at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("hash mismatch: {0}")]
    HashMismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = CompassError> = std::result::Result<T, E>;
