use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two inputs that must share a shape do not.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },
    /// An input value violates its domain (non-finite depth, bad intrinsics, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// More label instances than available instance slots.
    #[error("capacity exceeded: {labels} label instances but only {slots} slots")]
    Capacity { labels: usize, slots: usize },
    /// A mask index refers to something that does not exist.
    #[error("consistency error: {0}")]
    Consistency(String),
    /// A bundle file could not be read or written.
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A bundle file was read but its contents are malformed.
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn dimension(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad data on disk or in memory, as opposed to
    /// caller misuse of parameters.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidInput(_) | Error::Capacity { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
