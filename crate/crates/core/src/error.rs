use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("missing semantic rows for {role}: {ids:?}")]
    MissingSemanticRows { role: String, ids: Vec<String> },

    #[error("malformed {what} at {location}: {reason}")]
    Parse { what: &'static str, location: String, reason: String },

    #[error("bad checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("transport failure after {attempts} attempt(s): {reason}")]
    Transport { attempts: u32, reason: String },

    #[error("no training items for user {0}")]
    NoTrainingItems(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: ui={loss_ui}, tag={loss_tag}, cl={loss_cl}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss_ui: f64, loss_tag: f64, loss_cl: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(what: &'static str, location: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse { what, location: location.into(), reason: reason.into() }
    }
}
