//! Copying a source SQLite database onto a target engine: introspect,
//! infer kinds, create permissive tables, bulk load, verify.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xdialect_core::{BenchmarkSpec, Dialect, SchemaSnapshot, TypeKind};

use crate::adapters::Engine;
use crate::error::EngineError;

pub mod ddl;
pub mod introspect;
pub mod transfer;
pub mod typemap;
pub mod verify;

pub use ddl::{render_statements, render_target_ddl, DdlMode};
pub use introspect::{infer_logical_types, introspect_schema, kind_from_declared, SourceDb};
pub use transfer::transfer_data;
pub use typemap::TypeMappingTable;
pub use verify::{verify_migration, ColumnChecksum, ColumnSums, TableReport};

#[derive(Debug, Error)]
pub enum MigrationError {
    #[error("no target type for kind '{kind}' in dialect '{dialect}'")]
    Unmapped { kind: String, dialect: String },
    #[error("{0}")]
    Mapping(String),
    #[error("source {}: {message}", path.display())]
    Source { path: PathBuf, message: String },
    #[error("loading {table} failed at row offset {offset}: {message}")]
    Transfer { table: String, offset: u64, message: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone)]
pub struct MigrationConfig {
    pub batch_size: usize,
    pub sample_limit: usize,
    pub mapping: TypeMappingTable,
    /// Databases migrated at once; each has its own writer.
    pub workers: usize,
}

impl Default for MigrationConfig {
    fn default() -> Self {
        MigrationConfig { batch_size: 10_000, sample_limit: 1000, mapping: TypeMappingTable::builtin(), workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Retyped {
    pub column: String,
    pub from: TypeKind,
    pub to: TypeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationReport {
    pub db_id: String,
    pub dialect: Dialect,
    pub namespace: String,
    pub tables: Vec<TableReport>,
    /// Text columns now carried as dates or timestamps, as `table.column`.
    pub promoted: Vec<String>,
    /// Columns whose stored values forced a different kind than declared.
    pub retyped: Vec<Retyped>,
    pub elapsed_ms: f64,
    pub verified: bool,
    /// Source names with the kinds the data was loaded as.
    pub schema: SchemaSnapshot,
}

impl MigrationReport {
    pub fn total_source_rows(&self) -> u64 {
        self.tables.iter().map(|t| t.source_rows).sum()
    }

    pub fn total_target_rows(&self) -> u64 {
        self.tables.iter().map(|t| t.target_rows).sum()
    }

    pub fn mismatches(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in &self.tables {
            if !t.count_match {
                out.push(format!(
                    "{}: {} source rows, {} loaded, {} on target",
                    t.name, t.source_rows, t.loaded_rows, t.target_rows
                ));
            }
            for c in t.columns.iter().filter(|c| !c.matches()) {
                out.push(format!("{}.{}: checksum differs", t.name, c.name));
            }
        }
        out
    }
}

/// Reports for the databases that migrated, errors for those that did not.
#[derive(Debug, Default)]
pub struct MigrationSummary {
    pub reports: BTreeMap<String, MigrationReport>,
    pub failures: BTreeMap<String, String>,
}

impl MigrationSummary {
    pub fn all_verified(&self) -> bool {
        self.failures.is_empty() && self.reports.values().all(|r| r.verified)
    }
}

/// Target schema/database name for one benchmark database. Lowercase
/// letters, digits and underscores only, at most 63 bytes.
pub fn namespace_for(benchmark: &str, db_id: &str) -> String {
    let clean = |s: &str| -> String {
        s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
    };
    let mut ns = format!("{}__{}", clean(benchmark), clean(db_id));
    ns.truncate(63);
    ns
}

/// Kind changes between the declared and inferred snapshots.
fn kind_changes(declared: &SchemaSnapshot, inferred: &SchemaSnapshot) -> (Vec<String>, Vec<Retyped>) {
    let mut promoted = Vec::new();
    let mut retyped = Vec::new();
    for (d, i) in declared.tables.iter().zip(&inferred.tables) {
        for (dc, ic) in d.columns.iter().zip(&i.columns) {
            let from = kind_from_declared(&dc.declared);
            let to = ic.ty.kind;
            let column = format!("{}.{}", d.name, dc.name);
            match from {
                Some(TypeKind::Text) if matches!(to, TypeKind::Date | TypeKind::Timestamp) => promoted.push(column),
                Some(from) if from != to => retyped.push(Retyped { column, from, to }),
                _ => {}
            }
        }
    }
    (promoted, retyped)
}

/// Migrate one database into `namespace`, dropping whatever was there.
pub fn migrate_database(
    db_id: &str,
    source_path: &Path,
    engine: &dyn Engine,
    namespace: &str,
    config: &MigrationConfig,
) -> Result<MigrationReport, MigrationError> {
    let start = Instant::now();
    let dialect = engine.dialect().clone();
    if !config.mapping.covers(&dialect) {
        return Err(MigrationError::Unmapped { kind: "any".into(), dialect: dialect.id().to_string() });
    }
    let source = SourceDb::open(source_path)?;
    let declared = introspect_schema(&source)?;
    let schema = infer_logical_types(&source, &declared, config.sample_limit, &config.mapping.promotions())?;
    let statements = render_statements(&schema, &dialect, &config.mapping, DdlMode::Load)?;

    engine.reset_namespace(namespace)?;
    let mut loader = engine.loader(namespace)?;
    for stmt in &statements {
        loader.run_ddl(stmt)?;
    }
    let loaded = transfer_data(&source, loader.as_mut(), &schema, &dialect, config.batch_size)?;
    let tables = verify_migration(&source, loader.as_mut(), &schema, &dialect, &loaded)?;
    let (promoted, retyped) = kind_changes(&declared, &schema);
    Ok(MigrationReport {
        db_id: db_id.to_string(),
        dialect,
        namespace: namespace.to_string(),
        verified: tables.iter().all(TableReport::verified),
        tables,
        promoted,
        retyped,
        elapsed_ms: start.elapsed().as_secs_f64() * 1000.0,
        schema,
    })
}

/// Migrate every database the benchmark uses. A failing database is
/// recorded and the rest continue.
pub fn migrate(benchmark: &BenchmarkSpec, engine: &dyn Engine, config: &MigrationConfig) -> MigrationSummary {
    let db_ids: Vec<&str> = benchmark.db_ids().into_iter().collect();
    let next = AtomicUsize::new(0);
    let summary = Mutex::new(MigrationSummary::default());
    std::thread::scope(|scope| {
        for _ in 0..config.workers.clamp(1, db_ids.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(db_id) = db_ids.get(i) else { break };
                let outcome = match benchmark.db_registry.get(*db_id) {
                    None => Err(format!("database '{db_id}' is not in the registry")),
                    Some(path) => {
                        let ns = namespace_for(&benchmark.name, db_id);
                        migrate_database(db_id, path, engine, &ns, config).map_err(|e| e.to_string())
                    }
                };
                let mut s = summary.lock().unwrap_or_else(|p| p.into_inner());
                match outcome {
                    Ok(report) => {
                        s.reports.insert(db_id.to_string(), report);
                    }
                    Err(message) => {
                        tracing::warn!(db_id, %message, "migration failed");
                        s.failures.insert(db_id.to_string(), message);
                    }
                }
            });
        }
    });
    summary.into_inner().unwrap_or_else(|p| p.into_inner())
}
