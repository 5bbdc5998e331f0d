//! Engine adapters, source-to-target migration, and per-example evaluation.

pub mod adapters;
pub mod dsn;
pub mod error;
pub mod evaluate;
pub mod fixtures;
pub mod migration;

pub use adapters::{connect, Engine, EngineRegistry, Loader, PoolOptions, Session, DEFAULT_TIMEOUT_MS};
pub use error::{EngineError, Result};
