use std::path::PathBuf;

use thiserror::Error;
use xdialect_core::Dialect;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },
    #[error("run '{0}' already exists")]
    RunExists(String),
    #[error("run '{0}' not found (no manifest.json)")]
    RunMissing(String),
    #[error("database '{db_id}' has no migration to {dialect}; run `migrate --dialect {dialect}` first")]
    Unmigrated { db_id: String, dialect: Dialect },
    #[error("database '{db_id}' migrated to {dialect} but failed verification: {}", mismatches.join("; "))]
    Unverified { db_id: String, dialect: Dialect, mismatches: Vec<String> },
    #[error("guidelines for {dialect}: {message}")]
    Guidelines { dialect: String, message: String },
    #[error(transparent)]
    Core(#[from] xdialect_core::CoreError),
    #[error(transparent)]
    Engine(#[from] xdialect_engines::EngineError),
    #[error(transparent)]
    Migration(#[from] xdialect_engines::migration::MigrationError),
    #[error(transparent)]
    Metrics(#[from] xdialect_core::metrics::MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub(crate) fn file(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        HarnessError::File { path: path.into(), message: message.to_string() }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
