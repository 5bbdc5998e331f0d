//! Embedded SQLite engine: the source side of every benchmark, and the
//! storage behind the quirk dialect.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use r2d2::ManageConnection;
use rusqlite::types::{Value, ValueRef};
use rusqlite::{Connection, ErrorCode, OpenFlags};
use xdialect_core::value::{parse_iso_date, parse_iso_timestamp};
use xdialect_core::{Cell, Decimal, Dialect, ErrorKind, ExecutionOutcome, ResultSet, SchemaSnapshot, TableSchema, TypeKind};

use super::{decode_failure, single_statement, Engine, Loader, PoolOptions, Session};
use crate::error::{EngineError, Result};

/// Logical kinds of source columns that SQLite itself stores as text.
/// Values read from such a column decode into the richer cell type.
#[derive(Debug, Clone, Default)]
pub struct TypeHints {
    by_column: HashMap<(String, String), TypeKind>,
}

impl TypeHints {
    pub fn none() -> Self {
        TypeHints::default()
    }

    /// Date and timestamp columns of an inferred snapshot.
    pub fn from_snapshot(snapshot: &SchemaSnapshot) -> Self {
        let mut hints = TypeHints::none();
        for t in &snapshot.tables {
            for c in &t.columns {
                hints.insert(&t.name, &c.name, c.ty.kind);
            }
        }
        hints
    }

    pub fn insert(&mut self, table: &str, column: &str, kind: TypeKind) {
        if matches!(kind, TypeKind::Date | TypeKind::Timestamp) {
            self.by_column.insert((table.to_lowercase(), column.to_lowercase()), kind);
        }
    }

    pub fn get(&self, table: &str, column: &str) -> Option<TypeKind> {
        self.by_column.get(&(table.to_lowercase(), column.to_lowercase())).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.by_column.is_empty()
    }
}

#[derive(Debug)]
pub(crate) struct SqliteManager {
    path: PathBuf,
    flags: OpenFlags,
}

impl ManageConnection for SqliteManager {
    type Connection = Connection;
    type Error = rusqlite::Error;

    fn connect(&self) -> Result<Connection, rusqlite::Error> {
        let conn = Connection::open_with_flags(&self.path, self.flags)?;
        conn.busy_timeout(Duration::from_secs(5))?;
        Ok(conn)
    }

    fn is_valid(&self, conn: &mut Connection) -> Result<(), rusqlite::Error> {
        conn.query_row("SELECT 1", [], |_| Ok(()))
    }

    fn has_broken(&self, _: &mut Connection) -> bool {
        false
    }
}

/// Read-only pool over one database file.
pub struct SqliteEngine {
    dialect: Dialect,
    path: PathBuf,
    pool: r2d2::Pool<SqliteManager>,
    hints: Arc<TypeHints>,
}

impl std::fmt::Debug for SqliteEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SqliteEngine").field("path", &self.path).finish()
    }
}

impl SqliteEngine {
    pub fn open(path: &Path, opts: PoolOptions) -> Result<Self> {
        Self::open_as(Dialect::Sqlite, path, opts, TypeHints::none())
    }

    pub(crate) fn open_as(dialect: Dialect, path: &Path, opts: PoolOptions, hints: TypeHints) -> Result<Self> {
        let manager = SqliteManager {
            path: path.to_path_buf(),
            flags: OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX | OpenFlags::SQLITE_OPEN_URI,
        };
        // Probe once so a missing or corrupt file fails here with the
        // driver's own message.
        let probe = manager.connect().and_then(|mut c| manager.is_valid(&mut c));
        if let Err(e) = probe {
            return Err(EngineError::Connection {
                dialect: dialect.clone(),
                dsn: path.display().to_string(),
                message: e.to_string(),
            });
        }
        let pool = r2d2::Pool::builder()
            .max_size(opts.size.max(1))
            .min_idle(Some(0))
            .connection_timeout(opts.checkout_timeout)
            .test_on_check_out(true)
            .build_unchecked(manager);
        Ok(SqliteEngine { dialect, path: path.to_path_buf(), pool, hints: Arc::new(hints) })
    }

    /// Decode text in date/timestamp columns into temporal cells.
    pub fn with_hints(mut self, hints: TypeHints) -> Self {
        self.hints = Arc::new(hints);
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub(crate) fn checkout(&self) -> Result<SqliteSession> {
        let conn = self.pool.get().map_err(|e| EngineError::pool(&self.dialect, e))?;
        Ok(SqliteSession { conn, hints: self.hints.clone() })
    }
}

impl Engine for SqliteEngine {
    fn dialect(&self) -> &Dialect {
        &self.dialect
    }

    fn session(&self, _namespace: Option<&str>) -> Result<Box<dyn Session + '_>> {
        Ok(Box::new(self.checkout()?))
    }
}

/// A pooled connection; owns its pool handle, so it may outlive the
/// borrow of the engine it came from.
pub(crate) struct SqliteSession {
    conn: r2d2::PooledConnection<SqliteManager>,
    hints: Arc<TypeHints>,
}

impl Session for SqliteSession {
    fn execute(&mut self, sql: &str, timeout_ms: u64) -> ExecutionOutcome {
        run_query(&self.conn, sql, &self.hints, timeout_ms)
    }
}

enum QueryFail {
    Sqlite(rusqlite::Error),
    Decode(EngineError),
    NotReadOnly,
}

impl From<rusqlite::Error> for QueryFail {
    fn from(e: rusqlite::Error) -> Self {
        QueryFail::Sqlite(e)
    }
}

pub(crate) fn run_query(conn: &Connection, sql: &str, hints: &TypeHints, timeout_ms: u64) -> ExecutionOutcome {
    let sql = match single_statement(sql) {
        Ok(s) => s,
        Err(outcome) => return outcome,
    };
    let start = Instant::now();
    let deadline = start + Duration::from_millis(timeout_ms);
    conn.progress_handler(1000, Some(move || Instant::now() >= deadline));
    let out = query_rows(conn, &sql, hints);
    conn.progress_handler(0, None::<fn() -> bool>);
    match out {
        Ok(result) => ExecutionOutcome::Ok { result, elapsed_ms: start.elapsed().as_secs_f64() * 1000.0 },
        Err(QueryFail::Sqlite(e)) if is_interrupt(&e) => ExecutionOutcome::Timeout { limit_ms: timeout_ms },
        Err(QueryFail::Sqlite(e)) => {
            let message = e.to_string();
            ExecutionOutcome::error(ErrorKind::classify_message(&message), message)
        }
        Err(QueryFail::Decode(e)) => decode_failure(e),
        Err(QueryFail::NotReadOnly) => {
            ExecutionOutcome::error(ErrorKind::Other, "only read-only statements are allowed")
        }
    }
}

fn is_interrupt(e: &rusqlite::Error) -> bool {
    matches!(e, rusqlite::Error::SqliteFailure(f, _) if f.code == ErrorCode::OperationInterrupted)
}

fn query_rows(conn: &Connection, sql: &str, hints: &TypeHints) -> Result<ResultSet, QueryFail> {
    let mut stmt = conn.prepare(sql)?;
    if !stmt.readonly() {
        return Err(QueryFail::NotReadOnly);
    }
    let names: Vec<String> = stmt.column_names().iter().map(|s| s.to_string()).collect();
    let kinds: Vec<Option<TypeKind>> = if hints.is_empty() {
        vec![None; names.len()]
    } else {
        stmt.columns_with_metadata()
            .iter()
            .map(|m| match (m.table_name(), m.origin_name()) {
                (Some(t), Some(c)) => hints.get(t, c),
                _ => None,
            })
            .collect()
    };
    let mut rows = stmt.query([])?;
    let mut out = Vec::new();
    while let Some(row) = rows.next()? {
        let mut cells = Vec::with_capacity(names.len());
        for (i, kind) in kinds.iter().enumerate() {
            let cell = decode_value(row.get_ref(i)?, *kind).map_err(|message| {
                QueryFail::Decode(EngineError::Decode { column: names[i].clone(), message })
            })?;
            cells.push(cell);
        }
        out.push(cells);
    }
    ResultSet::new(names, out).map_err(|e| QueryFail::Decode(EngineError::Decode { column: String::new(), message: e.to_string() }))
}

/// Storage class to cell, with text in hinted temporal columns parsed.
/// Text that does not parse stays text.
pub(crate) fn decode_value(v: ValueRef<'_>, hint: Option<TypeKind>) -> Result<Cell, String> {
    Ok(match v {
        ValueRef::Null => Cell::Null,
        ValueRef::Integer(i) => Cell::Int(i),
        ValueRef::Real(f) => Cell::Float(f),
        ValueRef::Blob(b) => Cell::Bytes(b.to_vec()),
        ValueRef::Text(b) => {
            let s = std::str::from_utf8(b).map_err(|e| format!("text is not valid UTF-8: {e}"))?;
            let parsed = match hint {
                Some(TypeKind::Date) => parse_iso_date(s).map(Cell::Date),
                Some(TypeKind::Timestamp) => parse_iso_timestamp(s).map(Cell::Timestamp),
                _ => None,
            };
            parsed.unwrap_or_else(|| Cell::Text(s.to_string()))
        }
    })
}

/// Convert a stored value to the cell its column's logical kind calls
/// for. Migration loads exactly these cells and verification checksums
/// them, so the two agree by construction.
pub(crate) fn coerce_value(v: ValueRef<'_>, kind: &TypeKind) -> Result<Cell, String> {
    let text = |b: &[u8]| std::str::from_utf8(b).map(str::to_string).map_err(|e| format!("text is not valid UTF-8: {e}"));
    let mismatch = |what: &str| format!("{what} value in a {} column", kind.name());
    if let ValueRef::Null = v {
        return Ok(Cell::Null);
    }
    Ok(match kind {
        TypeKind::Integer => match v {
            ValueRef::Integer(i) => Cell::Int(i),
            ValueRef::Real(f) if f.fract() == 0.0 && f.abs() < 9.2e18 => Cell::Int(f as i64),
            ValueRef::Text(b) => Cell::Int(text(b)?.trim().parse().map_err(|_| mismatch("non-integer text"))?),
            _ => return Err(mismatch("non-integer")),
        },
        TypeKind::Float => match v {
            ValueRef::Integer(i) => Cell::Float(i as f64),
            ValueRef::Real(f) => Cell::Float(f),
            ValueRef::Text(b) => Cell::Float(text(b)?.trim().parse().map_err(|_| mismatch("non-numeric text"))?),
            _ => return Err(mismatch("blob")),
        },
        TypeKind::Decimal { .. } => match v {
            ValueRef::Integer(i) => Cell::Decimal(Decimal::from_big(i.into())),
            ValueRef::Real(f) if f.is_finite() => Cell::Decimal(f.to_string().parse().map_err(|_| mismatch("real"))?),
            ValueRef::Text(b) => Cell::Decimal(text(b)?.parse().map_err(|_| mismatch("non-numeric text"))?),
            _ => return Err(mismatch("non-finite or blob")),
        },
        TypeKind::Text => match v {
            ValueRef::Text(b) => Cell::Text(text(b)?),
            ValueRef::Integer(i) => Cell::Text(i.to_string()),
            ValueRef::Real(f) => Cell::Text(real_text(f)),
            ValueRef::Blob(b) => Cell::Text(text(b)?),
            ValueRef::Null => Cell::Null,
        },
        TypeKind::Boolean => match v {
            ValueRef::Integer(0) => Cell::Bool(false),
            ValueRef::Integer(1) => Cell::Bool(true),
            _ => return Err(mismatch("non-0/1")),
        },
        TypeKind::Date => match v {
            ValueRef::Text(b) => Cell::Date(parse_iso_date(&text(b)?).ok_or_else(|| mismatch("non-ISO"))?),
            _ => return Err(mismatch("non-text")),
        },
        TypeKind::Timestamp => match v {
            ValueRef::Text(b) => Cell::Timestamp(parse_iso_timestamp(&text(b)?).ok_or_else(|| mismatch("non-ISO"))?),
            _ => return Err(mismatch("non-text")),
        },
        TypeKind::Bytes => match v {
            ValueRef::Blob(b) | ValueRef::Text(b) => Cell::Bytes(b.to_vec()),
            _ => return Err(mismatch("numeric")),
        },
    })
}

/// SQLite's own text rendering of a REAL (`%!.15g`).
pub(crate) fn real_text(f: f64) -> String {
    if f.is_nan() {
        return "NaN".to_string();
    }
    if f.is_infinite() {
        return if f > 0.0 { "Inf" } else { "-Inf" }.to_string();
    }
    let (digits, point) = significant_digits(f.abs(), 15);
    let sign = if f < 0.0 { "-" } else { "" };
    let exp = point - 1;
    let digit = |i: usize| digits.as_bytes().get(i).map_or('0', |b| *b as char);
    if !(-4..=14).contains(&exp) {
        let rest = if digits.len() > 1 { &digits[1..] } else { "0" };
        let esign = if exp < 0 { '-' } else { '+' };
        return format!("{sign}{}.{rest}e{esign}{:02}", digit(0), exp.abs());
    }
    let mut out = String::from(sign);
    if point <= 0 {
        out.push('0');
    } else {
        out.extend((0..point as usize).map(digit));
    }
    out.push('.');
    let frac: String = (point.min(0)..0)
        .map(|_| '0')
        .chain((point.max(0) as usize..digits.len()).map(digit))
        .collect();
    out.push_str(if frac.is_empty() { "0" } else { &frac });
    out
}

/// Exact product of a double-double and a constant, rounded back to a
/// double-double; the same arithmetic the engine's printf uses.
fn dekker_mul(x: &mut [f64; 2], y: f64, yy: f64) {
    let split = |v: f64| f64::from_bits(v.to_bits() & 0xffff_ffff_fc00_0000);
    let hx = split(x[0]);
    let tx = x[0] - hx;
    let hy = split(y);
    let ty = y - hy;
    let p = hx * hy;
    let q = hx * ty + tx * hy;
    let c = p + q;
    let mut cc = p - c + q + tx * ty;
    cc += x[0] * yy + x[1] * y;
    x[0] = c + cc;
    x[1] = c - x[0] + cc;
}

/// Up to `round_to` significant digits of a positive finite value, trailing
/// zeros removed, and the position of the decimal point relative to them.
#[allow(clippy::excessive_precision)] // constants copied digit for digit from SQLite
fn significant_digits(r: f64, round_to: usize) -> (String, i32) {
    if r == 0.0 {
        return ("0".to_string(), 1);
    }
    let mut exp = 0i32;
    let mut rr = [r, 0.0];
    if rr[0] > 9.223372036854774784e18 {
        while rr[0] > 9.223372036854774784e118 {
            exp += 100;
            dekker_mul(&mut rr, 1.0e-100, -1.99918998026028836196e-117);
        }
        while rr[0] > 9.223372036854774784e28 {
            exp += 10;
            dekker_mul(&mut rr, 1.0e-10, -3.6432197315497741579e-27);
        }
        while rr[0] > 9.223372036854774784e18 {
            exp += 1;
            dekker_mul(&mut rr, 1.0e-01, -5.5511151231257827021e-18);
        }
    } else {
        while rr[0] < 9.223372036854774784e-83 {
            exp -= 100;
            dekker_mul(&mut rr, 1.0e100, -1.5902891109759918046e83);
        }
        while rr[0] < 9.223372036854774784e7 {
            exp -= 10;
            dekker_mul(&mut rr, 1.0e10, 0.0);
        }
        while rr[0] < 9.22337203685477478e17 {
            exp -= 1;
            dekker_mul(&mut rr, 1.0e1, 0.0);
        }
    }
    let v = if rr[1] < 0.0 { (rr[0] as u64).wrapping_sub((-rr[1]) as u64) } else { (rr[0] as u64).wrapping_add(rr[1] as u64) };
    let mut z: Vec<u8> = v.to_string().into_bytes();
    let mut point = z.len() as i32 + exp;
    if z.len() > round_to {
        // half-up on the first dropped digit only
        let up = z[round_to] >= b'5';
        z.truncate(round_to);
        if up {
            let mut j = round_to;
            loop {
                if j == 0 {
                    z.insert(0, b'1');
                    point += 1;
                    break;
                }
                j -= 1;
                if z[j] == b'9' {
                    z[j] = b'0';
                } else {
                    z[j] += 1;
                    break;
                }
            }
            z.truncate(round_to);
        }
    }
    while z.len() > 1 && z.last() == Some(&b'0') {
        z.pop();
    }
    (String::from_utf8(z).unwrap_or_default(), point)
}

/// Bind form of a cell for inserts into SQLite storage.
pub(crate) fn to_value(cell: &Cell) -> Value {
    match cell {
        Cell::Null => Value::Null,
        Cell::Int(i) => Value::Integer(*i),
        Cell::Float(f) => Value::Real(*f),
        Cell::Decimal(d) => Value::Text(d.to_string()),
        Cell::Text(s) => Value::Text(s.clone()),
        Cell::Bool(b) => Value::Integer(*b as i64),
        Cell::Date(d) => Value::Text(d.format("%Y-%m-%d").to_string()),
        Cell::Timestamp(t) => Value::Text(t.format("%Y-%m-%d %H:%M:%S%.f").to_string()),
        Cell::Bytes(b) => Value::Blob(b.clone()),
    }
}

/// Write access to one SQLite file, used for quirk targets.
pub(crate) struct SqliteLoader {
    pub(crate) conn: Connection,
    pub(crate) dialect: Dialect,
}

impl SqliteLoader {
    fn fail(&self, e: rusqlite::Error) -> EngineError {
        EngineError::engine(&self.dialect, e.to_string())
    }
}

impl Loader for SqliteLoader {
    fn run_ddl(&mut self, statement: &str) -> Result<()> {
        self.conn.execute_batch(statement).map_err(|e| self.fail(e))
    }

    fn begin(&mut self) -> Result<()> {
        self.conn.execute_batch("BEGIN").map_err(|e| self.fail(e))
    }

    fn commit(&mut self) -> Result<()> {
        self.conn.execute_batch("COMMIT").map_err(|e| self.fail(e))
    }

    fn rollback(&mut self) -> Result<()> {
        self.conn.execute_batch("ROLLBACK").map_err(|e| self.fail(e))
    }

    fn load_batch(&mut self, table: &TableSchema, rows: &[Vec<Cell>]) -> Result<()> {
        let q = |s: &str| self.dialect.quote_identifier(s);
        let cols: Vec<String> = table.columns.iter().map(|c| q(&c.name)).collect();
        let marks = vec!["?"; cols.len()].join(", ");
        let sql = format!("INSERT INTO {} ({}) VALUES ({marks})", q(&table.name), cols.join(", "));
        let mut stmt = self.conn.prepare_cached(&sql).map_err(|e| self.fail(e))?;
        for row in rows {
            let values: Vec<Value> = row.iter().map(to_value).collect();
            stmt.execute(rusqlite::params_from_iter(values)).map_err(|e| EngineError::engine(&self.dialect, e.to_string()))?;
        }
        Ok(())
    }

    fn scan_table(&mut self, table: &TableSchema, visit: &mut dyn FnMut(&[Cell])) -> Result<u64> {
        scan_coerced(&self.conn, &self.dialect, table, visit)
    }
}

/// Every row of `table`, each value coerced to its column's kind.
pub(crate) fn scan_coerced(
    conn: &Connection,
    dialect: &Dialect,
    table: &TableSchema,
    visit: &mut dyn FnMut(&[Cell]),
) -> Result<u64> {
    let q = |s: &str| dialect.quote_identifier(s);
    let cols: Vec<String> = table.columns.iter().map(|c| q(&c.name)).collect();
    let sql = format!("SELECT {} FROM {}", cols.join(", "), q(&table.name));
    let fail = |e: rusqlite::Error| EngineError::engine(dialect, format!("scanning {}: {e}", table.name));
    let mut stmt = conn.prepare(&sql).map_err(fail)?;
    let mut rows = stmt.query([]).map_err(fail)?;
    let mut cells = Vec::with_capacity(table.columns.len());
    let mut n = 0u64;
    while let Some(row) = rows.next().map_err(fail)? {
        cells.clear();
        for (i, col) in table.columns.iter().enumerate() {
            let v = row.get_ref(i).map_err(fail)?;
            let cell = coerce_value(v, &col.ty.kind).map_err(|message| EngineError::Decode {
                column: format!("{}.{}", table.name, col.name),
                message,
            })?;
            cells.push(cell);
        }
        visit(&cells);
        n += 1;
    }
    Ok(n)
}
