use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid dialect key '{0}': expected lowercase [a-z0-9_]+")]
    InvalidDialect(String),
    #[error("row {row} has {got} cells but the result has {expected} columns")]
    RowWidth { row: usize, got: usize, expected: usize },
    #[error("invalid decimal type: precision {precision} < scale {scale}")]
    DecimalPrecision { precision: u32, scale: u32 },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("benchmark parse error: {0}")]
    Parse(String),
    #[error("benchmark schema error: {0}")]
    Schema(String),
    #[error("manifest for run '{0}' already exists")]
    ManifestExists(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
