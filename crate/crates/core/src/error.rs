use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    InvalidParameter(String),

    #[error("{0} is undefined for empty or all-zero input")]
    Undefined(&'static str),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("indicator column `{column}` has zero variance across years")]
    ZeroVariance { column: String },

    #[error("graph constraint violated: {0}")]
    Graph(String),

    #[error("{}: {message}", path.display())]
    Schema { path: PathBuf, message: String },

    #[error("{}: row {row}, column `{column}`: {message}", path.display())]
    Row {
        path: PathBuf,
        row: u64,
        column: String,
        message: String,
    },

    #[error("sweep cell (beta={beta}, gamma={gamma}) failed: {source}")]
    SweepCell {
        beta: f64,
        gamma: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("alias table contains a cycle through `{0}`")]
    AliasCycle(String),

    #[error("I/O error on {}: {source}", path.display())]
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
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
