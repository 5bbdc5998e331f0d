use thiserror::Error;
use xdialect_core::Dialect;

/// Infrastructure failures. Query failures during evaluation are not
/// errors: they come back as [`xdialect_core::ExecutionOutcome`] values.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid {dialect} DSN: {message}")]
    Dsn { dialect: Dialect, message: String },

    /// `dsn` is always the redacted form.
    #[error("cannot connect to {dialect} at {dsn}: {message}")]
    Connection { dialect: Dialect, dsn: String, message: String },

    #[error("no adapter registered for dialect '{0}'")]
    Unsupported(Dialect),

    #[error("connection pool exhausted for {dialect}: {message}")]
    Pool { dialect: Dialect, message: String },

    #[error("{dialect}: {message}")]
    Engine { dialect: Dialect, message: String },

    #[error("cannot decode column '{column}': {message}")]
    Decode { column: String, message: String },

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl EngineError {
    pub(crate) fn engine(dialect: &Dialect, message: impl Into<String>) -> Self {
        EngineError::Engine { dialect: dialect.clone(), message: message.into() }
    }

    pub(crate) fn pool(dialect: &Dialect, err: r2d2::Error) -> Self {
        EngineError::Pool { dialect: dialect.clone(), message: err.to_string() }
    }
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;
