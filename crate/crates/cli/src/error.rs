use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("checkpoint {0} not found; run `pcsc train` first")]
    MissingCheckpoint(PathBuf),
    #[error(transparent)]
    Core(#[from] pcsc::Error),
}

impl CliError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Toml { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Manifest { .. } => "manifest",
            CliError::MissingCheckpoint(_) => "missing_checkpoint",
            CliError::Core(pcsc::Error::Parse { .. }) => "parse",
            CliError::Core(pcsc::Error::Checkpoint(_)) => "checkpoint",
            CliError::Core(pcsc::Error::Config(_)) => "config",
            CliError::Core(_) => "runtime",
        }
    }

    /// `error kind=<kind> message="<text>"` on one line.
    pub fn one_line(&self) -> String {
        let text = self.to_string().replace(['\n', '\r'], " ").replace('"', "'");
        format!("error kind={} message=\"{}\"", self.kind(), text.trim())
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
