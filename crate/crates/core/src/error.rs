//! Error type shared by the library.
//!
//! Recoverable per-line problems (malformed dump lines, unresolvable
//! territories) are *not* errors; they are skipped and counted by the
//! operation that met them. `Error` is reserved for conditions that
//! invalidate a whole run.

use std::path::PathBuf;

use crate::model::SourceTag;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    UnwritablePath {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A dump declared a different source than the one it was loaded as.
    /// Fatal: silently mixing sources would corrupt the one-to-one mapping.
    #[error("{path}:{line}: record declares source {found} in a {expected} dump")]
    SourceMismatch {
        path: PathBuf,
        line: usize,
        expected: SourceTag,
        found: SourceTag,
    },

    #[error("malformed population table {path}:{line}: {reason}")]
    MalformedPopulationTable {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
