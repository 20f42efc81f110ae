use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index out of range: ({row}, {col}) in a {rows}x{cols} mask")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("duplicate link ({row}, {col})")]
    DuplicateLink { row: usize, col: usize },

    #[error("spike data must be binary, found {0}")]
    NonBinary(u8),

    #[error("sparsity {0} leaves nodes isolated")]
    IsolatedNodes(f64),

    #[error("percolated network: no trainable path")]
    Percolated,

    #[error("regrowth requested {requested} links but only {available} absent pairs are available")]
    RegrowthExhausted { requested: usize, available: usize },

    #[error("bad magic in {file}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        file: String,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {file}: expected {expected} bytes, found {found}")]
    Truncated {
        file: String,
        expected: u64,
        found: u64,
    },

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("incompatible architectures: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
