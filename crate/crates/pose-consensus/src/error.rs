use std::path::PathBuf;
use std::time::Duration;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{0}")]
    Core(#[from] pose_consensus_core::Error),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid video registry: {0}")]
    Registry(String),
    #[error("invalid synthetic scenario file: {0}")]
    Scenario(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("estimator backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("estimator backend did not answer within {0:?}")]
    BackendTimeout(Duration),
    #[error("malformed estimator response: {0}")]
    MalformedResponse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors that mean the backend process itself is gone.
    pub fn is_backend_failure(&self) -> bool {
        matches!(self, Error::BackendUnavailable(_) | Error::BackendTimeout(_))
    }
}
