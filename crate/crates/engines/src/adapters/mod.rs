//! Uniform execution interface over the supported engines.
//!
//! An [`Engine`] owns a bounded connection pool. A [`Session`] is one
//! checked-out connection, confined to the worker holding it and returned
//! to the pool on drop. Query failures never surface as Rust errors from
//! [`Session::execute`]; they are [`ExecutionOutcome`] values.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use xdialect_core::sqltext::{split_statements, strip_trailing_semicolons};
use xdialect_core::{Cell, Dialect, ErrorKind, ExecutionOutcome, TableSchema};

use crate::dsn::Dsn;
use crate::error::{EngineError, Result};

pub mod clickhouse;
pub mod mysql;
pub mod postgres;
pub mod quirk;
pub mod sqlite;

pub use quirk::{perturb, QuirkEngine};
pub use sqlite::{SqliteEngine, TypeHints};

/// Per-query limit used when the run configuration does not set one.
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

/// Slack granted on top of a query's limit before the client gives up.
pub const TIMEOUT_GRACE: Duration = Duration::from_millis(1000);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolOptions {
    pub size: u32,
    /// How long a checkout may wait for a free connection.
    pub checkout_timeout: Duration,
}

impl Default for PoolOptions {
    fn default() -> Self {
        PoolOptions { size: 8, checkout_timeout: Duration::from_secs(30) }
    }
}

impl PoolOptions {
    pub fn with_size(size: u32) -> Self {
        PoolOptions { size: size.max(1), ..Default::default() }
    }
}

pub trait Engine: Send + Sync {
    fn dialect(&self) -> &Dialect;

    /// Check out a connection. `namespace` selects the schema/database a
    /// migrated benchmark database lives in; embedded source engines
    /// ignore it.
    fn session(&self, namespace: Option<&str>) -> Result<Box<dyn Session + '_>>;

    /// Drop the namespace if present and recreate it empty.
    fn reset_namespace(&self, namespace: &str) -> Result<()> {
        let _ = namespace;
        Err(EngineError::engine(self.dialect(), "this engine does not accept migrations"))
    }

    /// Write access to a namespace, for migration only.
    fn loader(&self, namespace: &str) -> Result<Box<dyn Loader + '_>> {
        let _ = namespace;
        Err(EngineError::engine(self.dialect(), "this engine does not accept migrations"))
    }
}

pub trait Session {
    /// Run one read-only statement with a time limit.
    fn execute(&mut self, sql: &str, timeout_ms: u64) -> ExecutionOutcome;
}

/// Bulk-load side of a target engine. Tables handed in are already
/// folded to the names the target stores.
pub trait Loader {
    fn run_ddl(&mut self, statement: &str) -> Result<()>;
    fn begin(&mut self) -> Result<()>;
    fn commit(&mut self) -> Result<()>;
    fn rollback(&mut self) -> Result<()>;
    /// Cells arrive already coerced to each column's logical kind.
    fn load_batch(&mut self, table: &TableSchema, rows: &[Vec<Cell>]) -> Result<()>;
    /// Stream every row of `table` in engine order; returns the row count.
    fn scan_table(&mut self, table: &TableSchema, visit: &mut dyn FnMut(&[Cell])) -> Result<u64>;
}

type Factory = dyn Fn(&Dialect, &str, PoolOptions) -> Result<Arc<dyn Engine>> + Send + Sync;

/// Maps dialect ids to adapter constructors. Extension dialects
/// (Snowflake, BigQuery, or anything else) plug in here.
pub struct EngineRegistry {
    factories: BTreeMap<String, Box<Factory>>,
}

impl Default for EngineRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

impl EngineRegistry {
    pub fn empty() -> Self {
        EngineRegistry { factories: BTreeMap::new() }
    }

    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register("sqlite", |d, dsn, opts| match Dsn::parse(d, dsn)? {
            Dsn::Sqlite(path) => Ok(Arc::new(SqliteEngine::open(&path, opts)?) as Arc<dyn Engine>),
            _ => unreachable!("sqlite DSNs always parse to a path"),
        });
        r.register("quirk", |d, dsn, opts| match Dsn::parse(d, dsn)? {
            Dsn::Quirk(dir) => Ok(Arc::new(QuirkEngine::open(&dir, opts)?) as Arc<dyn Engine>),
            _ => unreachable!("quirk DSNs always parse to a directory"),
        });
        r.register("postgres", |d, dsn, opts| {
            Dsn::parse(d, dsn)?;
            Ok(Arc::new(postgres::PostgresEngine::connect(dsn, opts)?) as Arc<dyn Engine>)
        });
        r.register("mysql", |d, dsn, opts| {
            Dsn::parse(d, dsn)?;
            Ok(Arc::new(mysql::MysqlEngine::connect(dsn, opts)?) as Arc<dyn Engine>)
        });
        r.register("clickhouse", |d, dsn, opts| match Dsn::parse(d, dsn)? {
            Dsn::Url(url) => Ok(Arc::new(clickhouse::ClickhouseEngine::connect(url, opts)?) as Arc<dyn Engine>),
            _ => unreachable!("clickhouse DSNs always parse to a URL"),
        });
        r
    }

    pub fn register<F>(&mut self, dialect_id: &str, factory: F)
    where
        F: Fn(&Dialect, &str, PoolOptions) -> Result<Arc<dyn Engine>> + Send + Sync + 'static,
    {
        self.factories.insert(dialect_id.to_string(), Box::new(factory));
    }

    pub fn supports(&self, dialect: &Dialect) -> bool {
        self.factories.contains_key(dialect.id())
    }

    pub fn connect(&self, dialect: &Dialect, dsn: &str, opts: PoolOptions) -> Result<Arc<dyn Engine>> {
        let factory = self
            .factories
            .get(dialect.id())
            .ok_or_else(|| EngineError::Unsupported(dialect.clone()))?;
        factory(dialect, dsn, opts)
    }
}

/// Connect with the built-in adapters.
pub fn connect(dialect: &Dialect, dsn: &str, pool_size: u32) -> Result<Arc<dyn Engine>> {
    EngineRegistry::with_builtin().connect(dialect, dsn, PoolOptions::with_size(pool_size))
}

/// The single statement to run, or the outcome to report instead.
pub(crate) fn single_statement(sql: &str) -> std::result::Result<String, ExecutionOutcome> {
    let parts: Vec<String> = split_statements(sql)
        .into_iter()
        .map(|s| strip_trailing_semicolons(&s).trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    match parts.len() {
        0 => Err(ExecutionOutcome::error(ErrorKind::Syntax, "empty query")),
        1 => Ok(parts.into_iter().next().unwrap_or_default()),
        n => Err(ExecutionOutcome::error(
            ErrorKind::Other,
            format!("multiple statements are not allowed ({n} found)"),
        )),
    }
}

/// Runs `work` while a watchdog thread waits `after`; if `work` has not
/// finished by then, `fire` runs (typically a server-side cancel).
pub(crate) fn with_watchdog<R>(after: Duration, fire: impl FnOnce() + Send + 'static, work: impl FnOnce() -> R) -> R {
    let (done, wait) = mpsc::channel::<()>();
    let dog = thread::spawn(move || {
        if let Err(mpsc::RecvTimeoutError::Timeout) = wait.recv_timeout(after) {
            fire();
        }
    });
    let out = work();
    let _ = done.send(());
    let _ = dog.join();
    out
}

pub(crate) fn decode_failure(err: EngineError) -> ExecutionOutcome {
    ExecutionOutcome::error(ErrorKind::Other, err.to_string())
}
