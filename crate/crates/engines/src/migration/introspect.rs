//! Reading a source SQLite database: catalog, storage classes, and the
//! logical type each column can carry losslessly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use xdialect_core::value::{parse_iso_date, parse_iso_timestamp};
use xdialect_core::{Cell, ColumnSchema, Dialect, ForeignKey, LogicalType, SchemaSnapshot, TableSchema, TypeKind};

use super::MigrationError;
use crate::adapters::sqlite::{coerce_value, scan_coerced};

/// Read-only handle on a source database file.
pub struct SourceDb {
    path: PathBuf,
    conn: Connection,
}

impl SourceDb {
    pub fn open(path: &Path) -> Result<Self, MigrationError> {
        let fail = |message: String| MigrationError::Source { path: path.to_path_buf(), message };
        if !path.is_file() {
            return Err(fail("no such file".into()));
        }
        let conn = Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)
            .map_err(|e| fail(e.to_string()))?;
        // Opening is lazy; touch the catalog so a corrupt file fails here.
        conn.query_row("SELECT count(*) FROM sqlite_master", [], |r| r.get::<_, i64>(0))
            .map_err(|e| fail(e.to_string()))?;
        Ok(SourceDb { path: path.to_path_buf(), conn })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn fail(&self, e: rusqlite::Error) -> MigrationError {
        MigrationError::Source { path: self.path.clone(), message: e.to_string() }
    }

    /// The CREATE TABLE statements exactly as stored, in creation order.
    pub fn original_ddl(&self) -> Result<String, MigrationError> {
        let mut stmt = self
            .conn
            .prepare(
                "SELECT sql FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' \
                 AND sql IS NOT NULL ORDER BY rowid",
            )
            .map_err(|e| self.fail(e))?;
        let rows = stmt.query_map([], |r| r.get::<_, String>(0)).map_err(|e| self.fail(e))?;
        let mut out = Vec::new();
        for sql in rows {
            out.push(format!("{};", sql.map_err(|e| self.fail(e))?.trim_end_matches(';')));
        }
        Ok(out.join("\n\n"))
    }

    /// Every row of `table` (source names), coerced to the column kinds.
    pub fn scan(&self, table: &TableSchema, visit: &mut dyn FnMut(&[Cell])) -> Result<u64, MigrationError> {
        Ok(scan_coerced(&self.conn, &Dialect::Sqlite, table, visit)?)
    }
}

fn quote(ident: &str) -> String {
    Dialect::Sqlite.quote_identifier(ident)
}

/// Kind implied by a declared column type, or `None` when the declaration
/// says nothing (no type, BLOB, or an unrecognised name) and storage decides.
pub fn kind_from_declared(declared: &str) -> Option<TypeKind> {
    let d = declared.to_uppercase();
    let has = |s: &str| d.contains(s);
    if has("BOOL") {
        Some(TypeKind::Boolean)
    } else if has("DATETIME") || has("TIMESTAMP") {
        Some(TypeKind::Timestamp)
    } else if has("DATE") {
        Some(TypeKind::Date)
    } else if has("DECIMAL") || has("NUMERIC") {
        Some(declared_decimal(&d))
    } else if has("INT") {
        Some(TypeKind::Integer)
    } else if has("CHAR") || has("CLOB") || has("TEXT") {
        Some(TypeKind::Text)
    } else if has("REAL") || has("FLOA") || has("DOUB") {
        Some(TypeKind::Float)
    } else {
        None
    }
}

fn declared_decimal(d: &str) -> TypeKind {
    let args = d.split_once('(').and_then(|(_, rest)| rest.split_once(')')).map(|(inner, _)| inner);
    let parsed: Option<Vec<u32>> = args.and_then(|a| a.split(',').map(|x| x.trim().parse().ok()).collect());
    match parsed.as_deref() {
        Some([p]) => TypeKind::decimal(*p, 0).unwrap_or(TypeKind::DEFAULT_DECIMAL),
        Some([p, s]) => TypeKind::decimal(*p, *s).unwrap_or(TypeKind::DEFAULT_DECIMAL),
        _ => TypeKind::DEFAULT_DECIMAL,
    }
}

/// Catalog read: user tables in creation order, declared kinds, keys and
/// row counts.
pub fn introspect_schema(source: &SourceDb) -> Result<SchemaSnapshot, MigrationError> {
    let conn = &source.conn;
    let mut stmt = conn
        .prepare(
            "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite\\_%' ESCAPE '\\' \
             AND coalesce(sql, '') NOT LIKE 'CREATE VIRTUAL%' ORDER BY rowid",
        )
        .map_err(|e| source.fail(e))?;
    let names: Vec<String> = stmt
        .query_map([], |r| r.get(0))
        .and_then(|rows| rows.collect())
        .map_err(|e| source.fail(e))?;
    let mut tables = Vec::with_capacity(names.len());
    for name in names {
        tables.push(describe_table(source, &name)?);
    }
    // References without explicit columns point at the parent's key.
    let keys: BTreeMap<String, Vec<String>> = tables
        .iter()
        .filter_map(|t| t.primary_key.clone().map(|pk| (t.name.to_lowercase(), pk)))
        .collect();
    for t in &mut tables {
        for fk in &mut t.foreign_keys {
            if fk.referenced_columns.iter().all(String::is_empty) {
                if let Some(pk) = keys.get(&fk.referenced_table.to_lowercase()) {
                    fk.referenced_columns = pk.clone();
                }
            }
        }
    }
    Ok(SchemaSnapshot { tables })
}

fn describe_table(source: &SourceDb, table: &str) -> Result<TableSchema, MigrationError> {
    let conn = &source.conn;
    let fail = |e| source.fail(e);
    let mut info = conn.prepare("SELECT name, type, \"notnull\", pk FROM pragma_table_info(?1) ORDER BY cid").map_err(fail)?;
    let rows: Vec<(String, String, bool, i64)> = info
        .query_map([table], |r| Ok((r.get(0)?, r.get::<_, Option<String>>(1)?.unwrap_or_default(), r.get(2)?, r.get(3)?)))
        .and_then(|rows| rows.collect())
        .map_err(fail)?;
    let mut pk: Vec<(i64, String)> = rows.iter().filter(|r| r.3 > 0).map(|r| (r.3, r.0.clone())).collect();
    pk.sort();
    let columns = rows
        .into_iter()
        .map(|(name, declared, notnull, _)| ColumnSchema {
            name,
            ty: LogicalType::new(kind_from_declared(&declared).unwrap_or(TypeKind::Bytes), !notnull),
            declared,
        })
        .collect();

    let mut fk_stmt =
        conn.prepare("SELECT id, \"table\", \"from\", \"to\" FROM pragma_foreign_key_list(?1) ORDER BY id, seq").map_err(fail)?;
    let fk_rows: Vec<(i64, String, String, Option<String>)> = fk_stmt
        .query_map([table], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)))
        .and_then(|rows| rows.collect())
        .map_err(fail)?;
    let mut foreign_keys: Vec<ForeignKey> = Vec::new();
    let mut last_id = None;
    for (id, parent, from, to) in fk_rows {
        if last_id != Some(id) {
            foreign_keys.push(ForeignKey { columns: vec![], referenced_table: parent, referenced_columns: vec![] });
            last_id = Some(id);
        }
        let fk = foreign_keys.last_mut().expect("pushed above");
        fk.columns.push(from);
        fk.referenced_columns.push(to.unwrap_or_default());
    }

    let row_count: i64 =
        conn.query_row(&format!("SELECT count(*) FROM {}", quote(table)), [], |r| r.get(0)).map_err(fail)?;
    Ok(TableSchema {
        name: table.to_string(),
        columns,
        primary_key: (!pk.is_empty()).then(|| pk.into_iter().map(|(_, n)| n).collect()),
        foreign_keys,
        row_count: row_count as u64,
    })
}

/// Lossless ISO timestamp: no offset and at most microsecond precision,
/// so reading it back as a timestamp keeps every digit of information.
pub(crate) fn is_plain_timestamp(s: &str) -> bool {
    if parse_iso_timestamp(s).is_none() || s.len() < 19 {
        return false;
    }
    let clock = &s[11..];
    let frac = clock.get(8..).unwrap_or("");
    frac.is_empty() || (frac.starts_with('.') && frac.len() <= 7 && frac[1..].bytes().all(|b| b.is_ascii_digit()))
}

/// Successively more permissive kinds to fall back to when stored values
/// do not fit the declared one.
fn fallback_chain(kind: TypeKind) -> Vec<TypeKind> {
    use TypeKind::*;
    let mut chain = vec![kind];
    chain.extend(match kind {
        Boolean => vec![Integer, Float, Text, Bytes],
        Integer => vec![Float, Text, Bytes],
        Decimal { .. } => vec![TypeKind::DEFAULT_DECIMAL, Float, Text, Bytes],
        Float => vec![Text, Bytes],
        Date | Timestamp => vec![Text, Bytes],
        Text => vec![Bytes],
        Bytes => vec![Text],
    });
    chain.dedup();
    chain
}

/// Whether one stored value can travel as `kind` without loss.
fn fits(v: ValueRef<'_>, kind: &TypeKind) -> bool {
    let Ok(cell) = coerce_value(v, kind) else { return false };
    match (kind, &cell, v) {
        (TypeKind::Decimal { precision, scale }, Cell::Decimal(d), _) => decimal_fits(d, *precision, *scale),
        (TypeKind::Float, Cell::Float(f), _) => f.is_finite(),
        (TypeKind::Timestamp, _, ValueRef::Text(b)) => std::str::from_utf8(b).is_ok_and(is_plain_timestamp),
        _ => true,
    }
}

fn decimal_fits(d: &xdialect_core::Decimal, precision: u32, scale: u32) -> bool {
    let (digits, exp) = d.as_big().normalized().as_bigint_and_exponent();
    let frac = exp.max(0) as u64;
    let magnitude = digits.magnitude().to_string();
    let whole = if digits.magnitude().bits() == 0 { 0 } else { (magnitude.len() as i64 - exp).max(0) as u64 };
    frac <= scale as u64 && whole <= (precision - scale) as u64
}

/// Kind from the storage classes a column actually holds.
fn kind_from_storage(classes: &[String]) -> TypeKind {
    let only = |allowed: &[&str]| classes.iter().all(|c| allowed.contains(&c.as_str()));
    if classes.is_empty() {
        TypeKind::Text
    } else if only(&["blob"]) {
        TypeKind::Bytes
    } else if only(&["integer"]) {
        TypeKind::Integer
    } else if only(&["integer", "real"]) {
        TypeKind::Float
    } else {
        TypeKind::Text
    }
}

/// Refine declared kinds against the stored data.
///
/// Columns without a usable declaration take their kind from storage.
/// Text columns whose first `sample_limit` non-null values are all ISO
/// dates (or all ISO timestamps) are promoted. Finally every value is
/// checked against the chosen kind, and a column holding anything that
/// would not load losslessly falls back along a chain of wider kinds.
pub fn infer_logical_types(
    source: &SourceDb,
    snapshot: &SchemaSnapshot,
    sample_limit: usize,
    promotions: &[TypeKind],
) -> Result<SchemaSnapshot, MigrationError> {
    let conn = &source.conn;
    let fail = |e| source.fail(e);
    let mut out = snapshot.clone();
    for table in &mut out.tables {
        for col in &mut table.columns {
            let declared_kind = kind_from_declared(&col.declared);
            let sql = format!("SELECT DISTINCT typeof({}) FROM {}", quote(&col.name), quote(&table.name));
            let mut stmt = conn.prepare(&sql).map_err(fail)?;
            let classes: Vec<String> = stmt
                .query_map([], |r| r.get(0))
                .and_then(|rows| rows.collect())
                .map_err(fail)?;
            let classes: Vec<String> = classes.into_iter().filter(|c| c != "null").collect();
            let mut kind = declared_kind.unwrap_or_else(|| kind_from_storage(&classes));
            if kind == TypeKind::Text && classes.iter().all(|c| c == "text") && sample_limit > 0 {
                kind = promote(source, &table.name, &col.name, sample_limit, promotions)?.unwrap_or(kind);
            }
            col.ty.kind = kind;
        }
        conform(source, table)?;
    }
    Ok(out)
}

fn promote(
    source: &SourceDb,
    table: &str,
    column: &str,
    sample_limit: usize,
    promotions: &[TypeKind],
) -> Result<Option<TypeKind>, MigrationError> {
    let sql = format!(
        "SELECT {c} FROM {t} WHERE {c} IS NOT NULL LIMIT {sample_limit}",
        c = quote(column),
        t = quote(table)
    );
    let mut stmt = source.conn.prepare(&sql).map_err(|e| source.fail(e))?;
    let sample: Vec<String> = stmt
        .query_map([], |r| r.get(0))
        .and_then(|rows| rows.collect())
        .map_err(|e| source.fail(e))?;
    if sample.is_empty() {
        return Ok(None);
    }
    Ok(promotions.iter().copied().find(|kind| match kind {
        TypeKind::Date => sample.iter().all(|s| parse_iso_date(s).is_some()),
        TypeKind::Timestamp => sample.iter().all(|s| is_plain_timestamp(s)),
        _ => false,
    }))
}

/// Full scan narrowing each column to the first kind in its chain that
/// every stored value fits.
fn conform(source: &SourceDb, table: &mut TableSchema) -> Result<(), MigrationError> {
    if table.columns.is_empty() {
        return Ok(());
    }
    let chains: Vec<Vec<TypeKind>> = table.columns.iter().map(|c| fallback_chain(c.ty.kind)).collect();
    let mut alive: Vec<Vec<bool>> = chains.iter().map(|c| vec![true; c.len()]).collect();
    let cols: Vec<String> = table.columns.iter().map(|c| quote(&c.name)).collect();
    let sql = format!("SELECT {} FROM {}", cols.join(", "), quote(&table.name));
    let mut stmt = source.conn.prepare(&sql).map_err(|e| source.fail(e))?;
    let mut rows = stmt.query([]).map_err(|e| source.fail(e))?;
    while let Some(row) = rows.next().map_err(|e| source.fail(e))? {
        for (i, chain) in chains.iter().enumerate() {
            let v = row.get_ref(i).map_err(|e| source.fail(e))?;
            if matches!(v, ValueRef::Null) {
                continue;
            }
            for (j, kind) in chain.iter().enumerate() {
                if alive[i][j] && !fits(v, kind) {
                    alive[i][j] = false;
                }
            }
        }
    }
    for ((col, chain), alive) in table.columns.iter_mut().zip(&chains).zip(&alive) {
        let Some(j) = alive.iter().position(|a| *a) else {
            return Err(MigrationError::Source {
                path: source.path.clone(),
                message: format!("column {}.{} holds values no target kind can carry", table.name, col.name),
            });
        };
        col.ty.kind = chain[j];
    }
    Ok(())
}
