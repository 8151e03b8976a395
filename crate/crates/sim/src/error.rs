use std::path::{Path, PathBuf};

pub type SimResult<T> = Result<T, SimError>;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] mimo_jscc_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: truncated at byte {offset}: {detail}")]
    Truncated {
        path: PathBuf,
        offset: u64,
        detail: String,
    },

    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("artifact {path} was built from config {found}, expected {expected}")]
    StaleArtifact {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl SimError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, detail: impl Into<String>) -> Self {
        SimError::Format {
            path: path.to_path_buf(),
            detail: detail.into(),
        }
    }
}
