use thiserror::Error;

use crate::Key;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmomaError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bucket index {index} out of range (limit {limit})")]
    BucketOutOfRange { index: usize, limit: usize },

    #[error("cell index {0} out of range")]
    CellOutOfRange(usize),

    #[error("key {0:#018x} is already present")]
    DuplicateKey(Key),

    #[error("stash overflow at capacity {capacity}")]
    StashOverflow { capacity: usize },

    #[error("dictionary failed on an earlier stash overflow and rejects insertions")]
    Poisoned,

    #[error("counter underflow in block {block} bit {bit}")]
    CounterUnderflow { block: usize, bit: usize },

    #[error("counter overflow in block {block} bit {bit}")]
    CounterOverflow { block: usize, bit: usize },

    #[error("key {0:#018x} is not recorded in the filter")]
    NotRecorded(Key),

    #[error("keys map to different filter blocks ({0} vs {1})")]
    BlockMismatch(usize, usize),

    #[error("key {0:#018x} is not stored at the given location")]
    NotAtLocation(Key),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, EmomaError>;
