use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Architecture, schedule or experiment configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller-supplied data violates an operation's precondition.
    #[error("input error: {0}")]
    Input(String),

    /// A non-finite value appeared during computation.
    #[error("numeric error in {location}: {detail}")]
    Numeric { location: String, detail: String },

    /// Masks or parameters do not match the batch they are applied to.
    #[error("contract error: {0}")]
    Contract(String),

    /// Internal shape invariant broken between cooperating components.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("partition error: {0}")]
    Partition(String),

    /// Federation protocol failure (empty aggregation, client failure, ...).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Malformed on-disk data.
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn numeric(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            location: location.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn format(offset: u64, detail: impl Into<String>) -> Self {
        Error::Format {
            offset,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
