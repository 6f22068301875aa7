use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("duplicate subscriber_id '{0}' in loan table")]
    DuplicateSubscriber(String),

    #[error("subscribers missing from loan table: {}", .0.join(", "))]
    OrphanSubscribers(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown characteristic '{0}'")]
    UnknownCharacteristic(String),

    #[error("quasi-separation detected; coefficient of '{feature}' diverges")]
    QuasiSeparation { feature: String },

    #[error("labels contain a single class{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    SingleClass { context: Option<String> },

    #[error("missing feature columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    #[error("default-rate calibration failed: {0}")]
    Calibration(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn single_class(context: impl Into<String>) -> Self {
        Error::SingleClass {
            context: Some(context.into()),
        }
    }

    /// True for errors caused by configuration rather than data.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::UnknownCharacteristic(_) | Error::Calibration(_)
        )
    }
}
