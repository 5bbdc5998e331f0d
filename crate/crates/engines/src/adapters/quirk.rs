//! The quirk dialect: the embedded engine plus deterministic output
//! perturbations that a correct comparator must see through.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rusqlite::Connection;
use xdialect_core::sqltext::contains_order_by;
use xdialect_core::{Cell, Dialect, ExecutionOutcome, ResultSet, TypeKind};

use super::sqlite::{SqliteEngine, SqliteLoader, SqliteSession, TypeHints};
use super::{Engine, Loader, PoolOptions, Session};
use crate::error::{EngineError, Result};

/// Relative nudge applied to every float, well inside the default
/// comparator tolerance.
pub const FLOAT_NUDGE: f64 = 1e-7;

/// Uppercase column names, rotate unordered rows by one, render temporal
/// cells as ISO text, nudge floats, and pad text with one space.
pub fn perturb(result: ResultSet, sql: &str) -> ResultSet {
    let (columns, mut rows) = result.into_parts();
    let columns = columns.into_iter().map(|c| c.to_uppercase()).collect();
    if !contains_order_by(sql) && rows.len() > 1 {
        rows.rotate_left(1);
    }
    for row in &mut rows {
        for cell in row.iter_mut() {
            *cell = match std::mem::replace(cell, Cell::Null) {
                Cell::Date(d) => Cell::Text(d.format("%Y-%m-%d").to_string()),
                Cell::Timestamp(t) => Cell::Text(t.format("%Y-%m-%dT%H:%M:%S%.fZ").to_string()),
                Cell::Float(f) => Cell::Float(f * (1.0 + FLOAT_NUDGE)),
                Cell::Text(s) => Cell::Text(s + " "),
                other => other,
            };
        }
    }
    ResultSet::new(columns, rows).expect("perturbation keeps row widths")
}

/// Directory of SQLite files, one per namespace.
pub struct QuirkEngine {
    dialect: Dialect,
    dir: PathBuf,
    opts: PoolOptions,
    open: Mutex<HashMap<String, Arc<SqliteEngine>>>,
}

impl QuirkEngine {
    pub fn open(dir: &Path, opts: PoolOptions) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| EngineError::Connection {
            dialect: Dialect::Quirk,
            dsn: format!("quirk:{}", dir.display()),
            message: e.to_string(),
        })?;
        Ok(QuirkEngine { dialect: Dialect::Quirk, dir: dir.to_path_buf(), opts, open: Mutex::new(HashMap::new()) })
    }

    pub fn namespace_path(&self, namespace: &str) -> PathBuf {
        self.dir.join(format!("{namespace}.sqlite"))
    }

    fn engine_for(&self, namespace: &str) -> Result<Arc<SqliteEngine>> {
        let mut open = self.open.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(e) = open.get(namespace) {
            return Ok(e.clone());
        }
        let path = self.namespace_path(namespace);
        if !path.exists() {
            return Err(EngineError::engine(&self.dialect, format!("namespace '{namespace}' has not been migrated")));
        }
        let hints = declared_temporal_hints(&path).map_err(|e| EngineError::engine(&self.dialect, e.to_string()))?;
        let engine = Arc::new(SqliteEngine::open_as(Dialect::Quirk, &path, self.opts, hints)?);
        open.insert(namespace.to_string(), engine.clone());
        Ok(engine)
    }
}

/// Migrated quirk tables declare DATE/TIMESTAMP, so the file itself says
/// which text columns hold temporal values.
fn declared_temporal_hints(path: &Path) -> rusqlite::Result<TypeHints> {
    let conn = Connection::open_with_flags(path, rusqlite::OpenFlags::SQLITE_OPEN_READ_ONLY)?;
    let mut hints = TypeHints::none();
    let mut tables = conn.prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%'")?;
    let names: Vec<String> = tables.query_map([], |r| r.get(0))?.collect::<rusqlite::Result<_>>()?;
    for t in names {
        let mut info = conn.prepare("SELECT name, type FROM pragma_table_info(?1)")?;
        let cols = info.query_map([&t], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?)))?;
        for col in cols {
            let (name, decl) = col?;
            match decl.to_uppercase().as_str() {
                "DATE" => hints.insert(&t, &name, TypeKind::Date),
                "TIMESTAMP" => hints.insert(&t, &name, TypeKind::Timestamp),
                _ => {}
            }
        }
    }
    Ok(hints)
}

impl Engine for QuirkEngine {
    fn dialect(&self) -> &Dialect {
        &self.dialect
    }

    fn session(&self, namespace: Option<&str>) -> Result<Box<dyn Session + '_>> {
        let ns = namespace.ok_or_else(|| EngineError::engine(&self.dialect, "a namespace is required"))?;
        let inner = self.engine_for(ns)?.checkout()?;
        Ok(Box::new(QuirkSession { inner }))
    }

    fn reset_namespace(&self, namespace: &str) -> Result<()> {
        self.open.lock().unwrap_or_else(|p| p.into_inner()).remove(namespace);
        let path = self.namespace_path(namespace);
        for suffix in ["", "-journal", "-wal", "-shm"] {
            let p = PathBuf::from(format!("{}{suffix}", path.display()));
            if p.exists() {
                std::fs::remove_file(&p)?;
            }
        }
        Connection::open(&path).map_err(|e| EngineError::engine(&self.dialect, e.to_string()))?;
        Ok(())
    }

    fn loader(&self, namespace: &str) -> Result<Box<dyn Loader + '_>> {
        let path = self.namespace_path(namespace);
        let conn = Connection::open(&path).map_err(|e| EngineError::engine(&self.dialect, e.to_string()))?;
        // A reload must not be served from a pool opened on the old file.
        self.open.lock().unwrap_or_else(|p| p.into_inner()).remove(namespace);
        Ok(Box::new(SqliteLoader { conn, dialect: self.dialect.clone() }))
    }
}

struct QuirkSession {
    inner: SqliteSession,
}

impl Session for QuirkSession {
    fn execute(&mut self, sql: &str, timeout_ms: u64) -> ExecutionOutcome {
        match self.inner.execute(sql, timeout_ms) {
            ExecutionOutcome::Ok { result, elapsed_ms } => {
                ExecutionOutcome::Ok { result: perturb(result, sql), elapsed_ms }
            }
            other => other,
        }
    }
}
