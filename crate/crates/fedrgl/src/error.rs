//! Crate error type.

use thiserror::Error;

/// Errors surfaced by the fallible parts of the crate.
///
/// Shape mismatches inside the numeric engine are programming errors and
/// panic with a "dimension error" message instead of returning a variant;
/// everything that depends on user input (files, configs, run setup) comes
/// back through this enum.
#[derive(Debug, Error)]
pub enum Error {
    /// Graph-bundle file violates the documented format.
    #[error("bundle format error: {0}")]
    Format(String),

    /// Configuration file or CLI flags are invalid.
    #[error("config error: {0}")]
    Config(String),

    /// The graph cannot be partitioned as requested.
    #[error("partition error: {0}")]
    Partition(String),

    /// A training round produced a non-finite loss.
    #[error("numeric abort: {0}")]
    NumericAbort(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
