use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty aggregation: {0}")]
    EmptyAggregation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic {found:?}, expected \"DPT1\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: truncated at byte offset {offset} (expected {expected} bytes)")]
    Truncated {
        path: PathBuf,
        offset: u64,
        expected: u64,
    },

    #[error("{path}: map kind {kind} requires {expected} channels, found {found}")]
    ChannelMismatch {
        path: PathBuf,
        kind: &'static str,
        expected: u32,
        found: u32,
    },

    #[error("{path}: expected a {expected} map, found {found}")]
    KindMismatch {
        path: PathBuf,
        expected: &'static str,
        found: &'static str,
    },

    #[error("{path}: unknown map kind tag {tag}")]
    UnknownKind { path: PathBuf, tag: u8 },

    #[error("{path}: {extra} trailing bytes after payload")]
    TrailingData { path: PathBuf, extra: u64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: at `{json_path}`: {msg}")]
    Schema {
        path: PathBuf,
        json_path: String,
        msg: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn empty(msg: impl Into<String>) -> Self {
        Error::EmptyAggregation(msg.into())
    }
}
