//! PostgreSQL adapter. Values are decoded from the binary wire format
//! directly so that NUMERIC keeps its full precision and scale.

use std::error::Error as StdError;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use bigdecimal::num_bigint::BigInt;
use bigdecimal::BigDecimal;
use chrono::{DateTime, NaiveDate, Utc};
use postgres::error::SqlState;
use postgres::fallible_iterator::FallibleIterator;
use postgres::types::{FromSql, Type};
use postgres::{Client, Config, NoTls};
use r2d2::ManageConnection;
use xdialect_core::{Cell, Decimal, Dialect, ErrorKind, ExecutionOutcome, ResultSet, TableSchema};

use super::{decode_failure, single_statement, with_watchdog, Engine, Loader, PoolOptions, Session, TIMEOUT_GRACE};
use crate::dsn::{redact, scrub};
use crate::error::{EngineError, Result};

pub(crate) struct PgManager {
    config: Config,
    dsn: String,
}

impl ManageConnection for PgManager {
    type Connection = Client;
    type Error = postgres::Error;

    fn connect(&self) -> Result<Client, postgres::Error> {
        let mut client = self.config.connect(NoTls)?;
        // Naive timestamps and date arithmetic must not depend on the
        // server's configured zone.
        client.batch_execute("SET TIME ZONE 'UTC'")?;
        Ok(client)
    }

    fn is_valid(&self, conn: &mut Client) -> Result<(), postgres::Error> {
        conn.is_valid(Duration::from_secs(5))
    }

    fn has_broken(&self, conn: &mut Client) -> bool {
        conn.is_closed()
    }
}

pub struct PostgresEngine {
    dialect: Dialect,
    pool: r2d2::Pool<PgManager>,
}

impl PostgresEngine {
    pub fn connect(dsn: &str, opts: PoolOptions) -> Result<Self> {
        let dialect = Dialect::Postgres;
        let config = Config::from_str(dsn).map_err(|e| EngineError::Dsn {
            dialect: dialect.clone(),
            message: format!("{} in '{}'", scrub(&e.to_string(), dsn), redact(dsn)),
        })?;
        let mut config = config;
        if config.get_connect_timeout().is_none() {
            config.connect_timeout(Duration::from_secs(10));
        }
        let manager = PgManager { config, dsn: dsn.to_string() };
        if let Err(e) = manager.connect() {
            return Err(EngineError::Connection {
                dialect,
                dsn: redact(dsn),
                message: scrub(&describe(&e), &manager.dsn),
            });
        }
        let pool = r2d2::Pool::builder()
            .max_size(opts.size.max(1))
            .min_idle(Some(0))
            .connection_timeout(opts.checkout_timeout)
            .test_on_check_out(true)
            .build_unchecked(manager);
        Ok(PostgresEngine { dialect, pool })
    }

    fn checkout(&self, namespace: Option<&str>) -> Result<r2d2::PooledConnection<PgManager>> {
        let mut conn = self.pool.get().map_err(|e| EngineError::pool(&self.dialect, e))?;
        let path = match namespace {
            Some(ns) => format!("SET search_path TO {}", quote(ns)),
            None => "SET search_path TO DEFAULT".to_string(),
        };
        conn.batch_execute(&path).map_err(|e| EngineError::engine(&self.dialect, describe(&e)))?;
        Ok(conn)
    }
}

fn quote(ident: &str) -> String {
    Dialect::Postgres.quote_identifier(ident)
}

/// Driver error text with the server's message when there is one.
fn describe(e: &postgres::Error) -> String {
    match e.as_db_error() {
        Some(db) => db.message().to_string(),
        None => match e.source() {
            Some(src) => format!("{e}: {src}"),
            None => e.to_string(),
        },
    }
}

impl Engine for PostgresEngine {
    fn dialect(&self) -> &Dialect {
        &self.dialect
    }

    fn session(&self, namespace: Option<&str>) -> Result<Box<dyn Session + '_>> {
        Ok(Box::new(PgSession { conn: self.checkout(namespace)? }))
    }

    fn reset_namespace(&self, namespace: &str) -> Result<()> {
        let mut conn = self.checkout(None)?;
        let ns = quote(namespace);
        conn.batch_execute(&format!("DROP SCHEMA IF EXISTS {ns} CASCADE; CREATE SCHEMA {ns}"))
            .map_err(|e| EngineError::engine(&self.dialect, describe(&e)))
    }

    fn loader(&self, namespace: &str) -> Result<Box<dyn Loader + '_>> {
        Ok(Box::new(PgLoader { conn: self.checkout(Some(namespace))? }))
    }
}

struct PgSession {
    conn: r2d2::PooledConnection<PgManager>,
}

impl Session for PgSession {
    fn execute(&mut self, sql: &str, timeout_ms: u64) -> ExecutionOutcome {
        let sql = match single_statement(sql) {
            Ok(s) => s,
            Err(outcome) => return outcome,
        };
        let start = Instant::now();
        let token = self.conn.cancel_token();
        let client: &mut Client = &mut self.conn;
        let ran = with_watchdog(
            Duration::from_millis(timeout_ms) + TIMEOUT_GRACE / 2,
            move || {
                let _ = token.cancel_query(NoTls);
            },
            || run_read_only(client, &sql, timeout_ms),
        );
        match ran {
            Ok(Ok(result)) => ExecutionOutcome::Ok { result, elapsed_ms: start.elapsed().as_secs_f64() * 1000.0 },
            Ok(Err(decode)) => decode_failure(decode),
            Err(e) => outcome_for(&e, timeout_ms),
        }
    }
}

fn run_read_only(client: &mut Client, sql: &str, timeout_ms: u64) -> Result<Result<ResultSet>, postgres::Error> {
    let mut tx = client.build_transaction().read_only(true).start()?;
    tx.batch_execute(&format!("SET LOCAL statement_timeout = {timeout_ms}"))?;
    let stmt = tx.prepare(sql)?;
    let names: Vec<String> = stmt.columns().iter().map(|c| c.name().to_string()).collect();
    let rows = tx.query(&stmt, &[])?;
    tx.rollback()?;
    Ok(decode_rows(names, &rows))
}

fn decode_rows(names: Vec<String>, rows: &[postgres::Row]) -> Result<ResultSet> {
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        out.push(decode_row(&names, row)?);
    }
    ResultSet::new(names, out).map_err(|e| EngineError::Decode { column: String::new(), message: e.to_string() })
}

fn decode_row(names: &[String], row: &postgres::Row) -> Result<Vec<Cell>> {
    (0..row.len())
        .map(|i| {
            row.try_get::<_, PgCell>(i).map(|c| c.0).map_err(|e| EngineError::Decode {
                column: names.get(i).cloned().unwrap_or_default(),
                message: e.source().map(|s| s.to_string()).unwrap_or_else(|| e.to_string()),
            })
        })
        .collect()
}

fn outcome_for(e: &postgres::Error, timeout_ms: u64) -> ExecutionOutcome {
    match e.as_db_error() {
        Some(db) if *db.code() == SqlState::QUERY_CANCELED => ExecutionOutcome::Timeout { limit_ms: timeout_ms },
        Some(db) => ExecutionOutcome::error(kind_for_sqlstate(db.code().code(), db.message()), db.message()),
        None if e.is_closed() => ExecutionOutcome::error(ErrorKind::Connection, describe(e)),
        None => {
            let message = describe(e);
            ExecutionOutcome::error(ErrorKind::classify_message(&message), message)
        }
    }
}

/// Error kind from the SQLSTATE class, falling back to the message.
pub(crate) fn kind_for_sqlstate(code: &str, message: &str) -> ErrorKind {
    match code {
        "42601" | "42883" => ErrorKind::Syntax,
        c if c.starts_with("42") || c.starts_with("22") => ErrorKind::Semantic,
        c if c.starts_with("23") => ErrorKind::Constraint,
        c if c.starts_with("08") => ErrorKind::Connection,
        _ => ErrorKind::classify_message(message),
    }
}

/// Any column value, decoded from the binary format by type.
struct PgCell(Cell);

impl<'a> FromSql<'a> for PgCell {
    fn from_sql(ty: &Type, raw: &'a [u8]) -> Result<Self, Box<dyn StdError + Sync + Send>> {
        decode_binary(ty, raw).map(PgCell).map_err(Into::into)
    }

    fn from_sql_null(_: &Type) -> Result<Self, Box<dyn StdError + Sync + Send>> {
        Ok(PgCell(Cell::Null))
    }

    fn accepts(_: &Type) -> bool {
        true
    }
}

fn pg_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

fn be<const N: usize>(raw: &[u8]) -> Result<[u8; N], String> {
    raw.try_into().map_err(|_| format!("expected {N} bytes, got {}", raw.len()))
}

pub(crate) fn decode_binary(ty: &Type, raw: &[u8]) -> Result<Cell, String> {
    let utf8 = |b: &[u8]| String::from_utf8(b.to_vec()).map_err(|e| e.to_string());
    Ok(match *ty {
        Type::BOOL => Cell::Bool(be::<1>(raw)?[0] != 0),
        Type::INT2 => Cell::Int(i16::from_be_bytes(be(raw)?) as i64),
        Type::INT4 => Cell::Int(i32::from_be_bytes(be(raw)?) as i64),
        Type::INT8 => Cell::Int(i64::from_be_bytes(be(raw)?)),
        Type::OID => Cell::Int(u32::from_be_bytes(be(raw)?) as i64),
        // Shortest decimal form of the f32, so 0.1::real reads as 0.1.
        Type::FLOAT4 => Cell::Float(f32::from_be_bytes(be(raw)?).to_string().parse().unwrap_or(f64::NAN)),
        Type::FLOAT8 => Cell::Float(f64::from_be_bytes(be(raw)?)),
        Type::NUMERIC => decode_numeric(raw)?,
        Type::TEXT | Type::VARCHAR | Type::BPCHAR | Type::NAME | Type::UNKNOWN | Type::JSON | Type::XML => {
            Cell::Text(utf8(raw)?)
        }
        Type::CHAR => Cell::Text((be::<1>(raw)?[0] as char).to_string()),
        Type::JSONB => match raw.split_first() {
            Some((1, body)) => Cell::Text(utf8(body)?),
            _ => return Err("unsupported jsonb version".into()),
        },
        Type::BYTEA => Cell::Bytes(raw.to_vec()),
        Type::UUID => {
            let h = hex::encode(be::<16>(raw)?);
            Cell::Text(format!("{}-{}-{}-{}-{}", &h[..8], &h[8..12], &h[12..16], &h[16..20], &h[20..]))
        }
        Type::DATE => match i32::from_be_bytes(be(raw)?) {
            i32::MAX => Cell::text("infinity"),
            i32::MIN => Cell::text("-infinity"),
            days => Cell::Date(
                pg_epoch()
                    .checked_add_signed(chrono::Duration::days(days as i64))
                    .ok_or("date out of range")?,
            ),
        },
        Type::TIMESTAMP | Type::TIMESTAMPTZ => match i64::from_be_bytes(be(raw)?) {
            i64::MAX => Cell::text("infinity"),
            i64::MIN => Cell::text("-infinity"),
            micros => {
                let epoch: DateTime<Utc> = pg_epoch().and_hms_opt(0, 0, 0).expect("midnight").and_utc();
                Cell::timestamp(
                    epoch.checked_add_signed(chrono::Duration::microseconds(micros)).ok_or("timestamp out of range")?,
                )
            }
        },
        Type::TIME => Cell::Text(clock_text(i64::from_be_bytes(be(raw)?))),
        Type::INTERVAL => {
            if raw.len() != 16 {
                return Err("bad interval length".into());
            }
            let micros = i64::from_be_bytes(be(&raw[..8])?);
            let days = i32::from_be_bytes(be(&raw[8..12])?);
            let months = i32::from_be_bytes(be(&raw[12..])?);
            Cell::Text(interval_text(months, days, micros))
        }
        _ if ty.name() == "citext" => Cell::Text(utf8(raw)?),
        _ => return Err(format!("unsupported column type {}", ty.name())),
    })
}

fn clock_text(micros: i64) -> String {
    let (secs, frac) = (micros.div_euclid(1_000_000), micros.rem_euclid(1_000_000));
    let mut s = format!("{:02}:{:02}:{:02}", secs / 3600, secs / 60 % 60, secs % 60);
    if frac != 0 {
        s.push_str(format!(".{frac:06}").trim_end_matches('0'));
    }
    s
}

fn interval_text(months: i32, days: i32, micros: i64) -> String {
    let mut parts = Vec::new();
    let (years, mons) = (months / 12, months % 12);
    let unit = |n: i64, one: &str, many: &str| format!("{n} {}", if n.abs() == 1 { one } else { many });
    if years != 0 {
        parts.push(unit(years as i64, "year", "years"));
    }
    if mons != 0 {
        parts.push(unit(mons as i64, "mon", "mons"));
    }
    if days != 0 {
        parts.push(unit(days as i64, "day", "days"));
    }
    if micros != 0 || parts.is_empty() {
        let sign = if micros < 0 { "-" } else { "" };
        parts.push(format!("{sign}{}", clock_text(micros.abs())));
    }
    parts.join(" ")
}

/// NUMERIC wire format: digit count, weight, sign, display scale, then
/// base-10000 digits, most significant first.
pub(crate) fn decode_numeric(raw: &[u8]) -> Result<Cell, String> {
    if raw.len() < 8 {
        return Err("numeric too short".into());
    }
    let word = |i: usize| u16::from_be_bytes([raw[i], raw[i + 1]]);
    let ndigits = word(0) as usize;
    let weight = word(2) as i16 as i64;
    let sign = word(4);
    let dscale = word(6) as i64;
    match sign {
        0xC000 => return Ok(Cell::Float(f64::NAN)),
        0xD000 => return Ok(Cell::Float(f64::INFINITY)),
        0xF000 => return Ok(Cell::Float(f64::NEG_INFINITY)),
        0x0000 | 0x4000 => {}
        other => return Err(format!("bad numeric sign {other:#x}")),
    }
    if raw.len() != 8 + 2 * ndigits {
        return Err("numeric length mismatch".into());
    }
    let mut digits = BigInt::from(0);
    for k in 0..ndigits {
        digits = digits * 10_000 + BigInt::from(word(8 + 2 * k));
    }
    if sign == 0x4000 {
        digits = -digits;
    }
    // value = digits * 10000^(weight - ndigits + 1)
    let exp10 = 4 * (weight - ndigits as i64 + 1);
    let value = BigDecimal::new(digits, -exp10).with_scale(dscale);
    Ok(Cell::Decimal(Decimal::from_big(value)))
}

struct PgLoader {
    conn: r2d2::PooledConnection<PgManager>,
}

impl PgLoader {
    fn run(&mut self, sql: &str) -> Result<()> {
        self.conn.batch_execute(sql).map_err(|e| EngineError::engine(&Dialect::Postgres, describe(&e)))
    }
}

impl Loader for PgLoader {
    fn run_ddl(&mut self, statement: &str) -> Result<()> {
        self.run(statement)
    }

    fn begin(&mut self) -> Result<()> {
        self.run("BEGIN")
    }

    fn commit(&mut self) -> Result<()> {
        self.run("COMMIT")
    }

    fn rollback(&mut self) -> Result<()> {
        self.run("ROLLBACK")
    }

    fn load_batch(&mut self, table: &TableSchema, rows: &[Vec<Cell>]) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let cols: Vec<String> = table.columns.iter().map(|c| quote(&c.name)).collect();
        let copy = format!("COPY {} ({}) FROM STDIN WITH (FORMAT csv)", quote(&table.name), cols.join(", "));
        let mut buf = Vec::new();
        for row in rows {
            write_csv_row(&mut buf, row);
        }
        let fail = |e: postgres::Error| EngineError::engine(&Dialect::Postgres, describe(&e));
        let mut writer = self.conn.copy_in(&copy).map_err(fail)?;
        writer.write_all(&buf)?;
        writer.finish().map_err(fail)?;
        Ok(())
    }

    fn scan_table(&mut self, table: &TableSchema, visit: &mut dyn FnMut(&[Cell])) -> Result<u64> {
        let cols: Vec<String> = table.columns.iter().map(|c| quote(&c.name)).collect();
        let sql = format!("SELECT {} FROM {}", cols.join(", "), quote(&table.name));
        let names: Vec<String> = table.columns.iter().map(|c| c.name.clone()).collect();
        let fail = |e: postgres::Error| EngineError::engine(&Dialect::Postgres, describe(&e));
        let mut rows = self.conn.query_raw(sql.as_str(), std::iter::empty::<i32>()).map_err(fail)?;
        let mut n = 0;
        while let Some(row) = rows.next().map_err(fail)? {
            visit(&decode_row(&names, &row)?);
            n += 1;
        }
        Ok(n)
    }
}

/// One CSV record for COPY. NULL is an empty unquoted field; every other
/// value is quoted, so an empty string stays distinct from NULL.
pub(crate) fn write_csv_row(buf: &mut Vec<u8>, row: &[Cell]) {
    for (i, cell) in row.iter().enumerate() {
        if i > 0 {
            buf.push(b',');
        }
        let text = match cell {
            Cell::Null => continue,
            Cell::Int(v) => v.to_string(),
            Cell::Float(f) if f.is_nan() => "NaN".into(),
            Cell::Float(f) if f.is_infinite() => if *f > 0.0 { "Infinity" } else { "-Infinity" }.into(),
            Cell::Float(f) => f.to_string(),
            Cell::Decimal(d) => d.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => if *b { "t" } else { "f" }.into(),
            Cell::Date(d) => d.format("%Y-%m-%d").to_string(),
            Cell::Timestamp(t) => t.format("%Y-%m-%d %H:%M:%S%.6f").to_string(),
            Cell::Bytes(b) => format!("\\x{}", hex::encode(b)),
        };
        buf.push(b'"');
        buf.extend_from_slice(text.replace('"', "\"\"").as_bytes());
        buf.push(b'"');
    }
    buf.push(b'\n');
}
