use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid option, flag, or column selection.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data does not satisfy an operation's preconditions.
    #[error("data error: {0}")]
    Data(String),

    /// A numerical routine failed (singular system, non-finite values).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// One treatment arm has no available rows.
    #[error("degenerate arm: no available rows with A = {arm}")]
    DegenerateArm { arm: u8 },

    /// A cross-fitting training complement has a single outcome class.
    #[error("degenerate fold {fold}: training complement for the {model} model has a single outcome class")]
    DegenerateFold { fold: usize, model: &'static str },

    /// Cluster-robust variance needs at least two clusters.
    #[error("degenerate cluster structure: {found} cluster(s), at least 2 required")]
    DegenerateCluster { found: usize },

    /// A mapped column is absent from the input header.
    #[error("schema error: column `{column}` not found in {path}")]
    Schema { column: String, path: PathBuf },

    /// A cell could not be parsed as a number.
    #[error("parse error at {path}:{line}: column `{column}` has unparseable value `{value}`")]
    Parse {
        path: PathBuf,
        line: usize,
        column: String,
        value: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
