//! MySQL adapter over the binary (prepared statement) protocol.

use std::time::{Duration, Instant};

use chrono::NaiveDate;
use mysql::consts::ColumnType;
use mysql::prelude::Queryable;
use mysql::{Conn, Opts, Params, Value};
use r2d2::ManageConnection;
use xdialect_core::{Cell, Dialect, ErrorKind, ExecutionOutcome, ResultSet, TableSchema};

use super::{decode_failure, single_statement, with_watchdog, Engine, Loader, PoolOptions, Session, TIMEOUT_GRACE};
use crate::dsn::{redact, scrub};
use crate::error::{EngineError, Result};

/// Character set id the server uses for binary strings.
const BINARY_CHARSET: u16 = 63;
const MAX_PLACEHOLDERS: usize = 65_535;

pub(crate) struct MysqlManager {
    opts: Opts,
}

impl ManageConnection for MysqlManager {
    type Connection = Conn;
    type Error = mysql::Error;

    fn connect(&self) -> Result<Conn, mysql::Error> {
        let mut conn = Conn::new(self.opts.clone())?;
        conn.query_drop("SET time_zone = '+00:00'")?;
        Ok(conn)
    }

    fn is_valid(&self, conn: &mut Conn) -> Result<(), mysql::Error> {
        conn.ping()
    }

    fn has_broken(&self, _: &mut Conn) -> bool {
        false
    }
}

pub struct MysqlEngine {
    dialect: Dialect,
    opts: Opts,
    pool: r2d2::Pool<MysqlManager>,
}

impl MysqlEngine {
    pub fn connect(dsn: &str, opts: PoolOptions) -> Result<Self> {
        let dialect = Dialect::Mysql;
        let parsed = Opts::from_url(dsn).map_err(|e| EngineError::Dsn {
            dialect: dialect.clone(),
            message: format!("{} in '{}'", scrub(&e.to_string(), dsn), redact(dsn)),
        })?;
        let manager = MysqlManager { opts: parsed.clone() };
        if let Err(e) = manager.connect() {
            return Err(EngineError::Connection { dialect, dsn: redact(dsn), message: scrub(&e.to_string(), dsn) });
        }
        let pool = r2d2::Pool::builder()
            .max_size(opts.size.max(1))
            .min_idle(Some(0))
            .connection_timeout(opts.checkout_timeout)
            .test_on_check_out(true)
            .build_unchecked(manager);
        Ok(MysqlEngine { dialect, opts: parsed, pool })
    }

    fn checkout(&self, namespace: Option<&str>) -> Result<r2d2::PooledConnection<MysqlManager>> {
        let mut conn = self.pool.get().map_err(|e| EngineError::pool(&self.dialect, e))?;
        if let Some(ns) = namespace {
            conn.select_db(ns).map_err(|e| EngineError::engine(&self.dialect, e.to_string()))?;
        }
        Ok(conn)
    }
}

fn quote(ident: &str) -> String {
    Dialect::Mysql.quote_identifier(ident)
}

impl Engine for MysqlEngine {
    fn dialect(&self) -> &Dialect {
        &self.dialect
    }

    fn session(&self, namespace: Option<&str>) -> Result<Box<dyn Session + '_>> {
        Ok(Box::new(MysqlSession { conn: self.checkout(namespace)?, opts: self.opts.clone() }))
    }

    fn reset_namespace(&self, namespace: &str) -> Result<()> {
        let mut conn = self.checkout(None)?;
        let ns = quote(namespace);
        for sql in [format!("DROP DATABASE IF EXISTS {ns}"), format!("CREATE DATABASE {ns} CHARACTER SET utf8mb4")] {
            conn.query_drop(sql).map_err(|e| EngineError::engine(&self.dialect, e.to_string()))?;
        }
        Ok(())
    }

    fn loader(&self, namespace: &str) -> Result<Box<dyn Loader + '_>> {
        Ok(Box::new(MysqlLoader { conn: self.checkout(Some(namespace))? }))
    }
}

struct MysqlSession {
    conn: r2d2::PooledConnection<MysqlManager>,
    opts: Opts,
}

enum Fail {
    Driver(mysql::Error),
    Decode(EngineError),
}

impl From<mysql::Error> for Fail {
    fn from(e: mysql::Error) -> Self {
        Fail::Driver(e)
    }
}

impl Session for MysqlSession {
    fn execute(&mut self, sql: &str, timeout_ms: u64) -> ExecutionOutcome {
        let sql = match single_statement(sql) {
            Ok(s) => s,
            Err(outcome) => return outcome,
        };
        let start = Instant::now();
        let id = self.conn.connection_id();
        let opts = self.opts.clone();
        let conn: &mut Conn = &mut self.conn;
        let ran = with_watchdog(
            Duration::from_millis(timeout_ms) + TIMEOUT_GRACE / 2,
            move || {
                if let Ok(mut killer) = Conn::new(opts) {
                    let _ = killer.query_drop(format!("KILL QUERY {id}"));
                }
            },
            || -> Result<ResultSet, Fail> {
                conn.query_drop(format!("SET SESSION MAX_EXECUTION_TIME = {timeout_ms}"))?;
                conn.query_drop("START TRANSACTION READ ONLY")?;
                let out = fetch(conn, &sql);
                let _ = conn.query_drop("ROLLBACK");
                out
            },
        );
        match ran {
            Ok(result) => ExecutionOutcome::Ok { result, elapsed_ms: start.elapsed().as_secs_f64() * 1000.0 },
            Err(Fail::Decode(e)) => decode_failure(e),
            Err(Fail::Driver(e)) => outcome_for(&e, timeout_ms),
        }
    }
}

fn fetch(conn: &mut Conn, sql: &str) -> Result<ResultSet, Fail> {
    let mut result = conn.exec_iter(sql, ())?;
    let columns: Vec<mysql::Column> = result.columns().as_ref().to_vec();
    let names: Vec<String> = columns.iter().map(|c| c.name_str().into_owned()).collect();
    let mut rows = Vec::new();
    for row in result.by_ref() {
        rows.push(decode_row(&columns, row?.unwrap()).map_err(Fail::Decode)?);
    }
    ResultSet::new(names, rows).map_err(|e| Fail::Decode(EngineError::Decode { column: String::new(), message: e.to_string() }))
}

fn decode_row(columns: &[mysql::Column], values: Vec<Value>) -> Result<Vec<Cell>> {
    columns
        .iter()
        .zip(values)
        .map(|(col, v)| {
            let meta = ColumnMeta { ty: col.column_type(), length: col.column_length(), charset: col.character_set() };
            decode_value(v, meta).map_err(|message| EngineError::Decode { column: col.name_str().into_owned(), message })
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ColumnMeta {
    pub ty: ColumnType,
    pub length: u32,
    pub charset: u16,
}

pub(crate) fn decode_value(v: Value, meta: ColumnMeta) -> Result<Cell, String> {
    use ColumnType::*;
    Ok(match v {
        Value::NULL => Cell::Null,
        // TINYINT(1) is how the server spells BOOLEAN.
        Value::Int(i @ (0 | 1)) if meta.ty == MYSQL_TYPE_TINY && meta.length == 1 => Cell::Bool(i == 1),
        Value::Int(i) => Cell::Int(i),
        Value::UInt(u) => match i64::try_from(u) {
            Ok(i) => Cell::Int(i),
            Err(_) => Cell::Decimal(u.to_string().parse().map_err(|e| format!("{e}"))?),
        },
        Value::Float(f) => Cell::Float(f.to_string().parse().unwrap_or(f64::NAN)),
        Value::Double(f) => Cell::Float(f),
        Value::Date(y, mo, d, h, mi, s, us) => {
            let Some(date) = NaiveDate::from_ymd_opt(y as i32, mo as u32, d as u32) else {
                return Ok(Cell::Text(format!("{y:04}-{mo:02}-{d:02}")));
            };
            if meta.ty == MYSQL_TYPE_DATE || meta.ty == MYSQL_TYPE_NEWDATE {
                Cell::Date(date)
            } else {
                let at = date.and_hms_micro_opt(h as u32, mi as u32, s as u32, us).ok_or("invalid time of day")?;
                Cell::naive_timestamp(at)
            }
        }
        Value::Time(neg, days, h, m, s, us) => {
            let hours = days * 24 + h as u32;
            let mut t = format!("{}{hours:02}:{m:02}:{s:02}", if neg { "-" } else { "" });
            if us != 0 {
                t.push_str(format!(".{us:06}").trim_end_matches('0'));
            }
            Cell::Text(t)
        }
        Value::Bytes(b) => match meta.ty {
            MYSQL_TYPE_DECIMAL | MYSQL_TYPE_NEWDECIMAL => {
                let s = String::from_utf8(b).map_err(|e| e.to_string())?;
                Cell::decimal(&s).map_err(|e| e.to_string())?
            }
            MYSQL_TYPE_BIT => Cell::Int(b.iter().fold(0i64, |acc, x| (acc << 8) | *x as i64)),
            MYSQL_TYPE_GEOMETRY => return Err("unsupported column type GEOMETRY".into()),
            MYSQL_TYPE_JSON | MYSQL_TYPE_ENUM | MYSQL_TYPE_SET => Cell::Text(String::from_utf8(b).map_err(|e| e.to_string())?),
            _ if meta.charset == BINARY_CHARSET => Cell::Bytes(b),
            _ => Cell::Text(String::from_utf8(b).map_err(|e| e.to_string())?),
        },
    })
}

fn outcome_for(e: &mysql::Error, timeout_ms: u64) -> ExecutionOutcome {
    match e {
        mysql::Error::MySqlError(me) => match kind_for_code(me.code, &me.message) {
            None => ExecutionOutcome::Timeout { limit_ms: timeout_ms },
            Some(kind) => ExecutionOutcome::error(kind, me.message.clone()),
        },
        mysql::Error::IoError(io) => ExecutionOutcome::error(ErrorKind::Connection, io.to_string()),
        other => {
            let message = other.to_string();
            ExecutionOutcome::error(ErrorKind::classify_message(&message), message)
        }
    }
}

/// `None` means the server interrupted the statement for running too long.
pub(crate) fn kind_for_code(code: u16, message: &str) -> Option<ErrorKind> {
    Some(match code {
        3024 | 1317 => return None,
        1064 | 1305 | 1149 => ErrorKind::Syntax,
        1054 | 1146 | 1052 | 1055 | 1056 | 1111 | 1140 | 1051 | 1049 => ErrorKind::Semantic,
        1048 | 1062 | 1451 | 1452 => ErrorKind::Constraint,
        2002 | 2003 | 2006 | 2013 => ErrorKind::Connection,
        _ => ErrorKind::classify_message(message),
    })
}

/// Bind value for an already-coerced cell.
pub(crate) fn to_value(cell: &Cell) -> Value {
    match cell {
        Cell::Null => Value::NULL,
        Cell::Int(i) => Value::Int(*i),
        Cell::Float(f) => Value::Double(*f),
        Cell::Decimal(d) => Value::Bytes(d.to_string().into_bytes()),
        Cell::Text(s) => Value::Bytes(s.as_bytes().to_vec()),
        Cell::Bool(b) => Value::Int(*b as i64),
        Cell::Date(d) => {
            use chrono::Datelike;
            Value::Date(d.year() as u16, d.month() as u8, d.day() as u8, 0, 0, 0, 0)
        }
        Cell::Timestamp(t) => {
            use chrono::{Datelike, Timelike};
            Value::Date(
                t.year() as u16,
                t.month() as u8,
                t.day() as u8,
                t.hour() as u8,
                t.minute() as u8,
                t.second() as u8,
                t.timestamp_subsec_micros(),
            )
        }
        Cell::Bytes(b) => Value::Bytes(b.clone()),
    }
}

struct MysqlLoader {
    conn: r2d2::PooledConnection<MysqlManager>,
}

impl MysqlLoader {
    fn run(&mut self, sql: &str) -> Result<()> {
        self.conn.query_drop(sql).map_err(|e| EngineError::engine(&Dialect::Mysql, e.to_string()))
    }
}

impl Loader for MysqlLoader {
    fn run_ddl(&mut self, statement: &str) -> Result<()> {
        self.run(statement)
    }

    fn begin(&mut self) -> Result<()> {
        self.run("START TRANSACTION")
    }

    fn commit(&mut self) -> Result<()> {
        self.run("COMMIT")
    }

    fn rollback(&mut self) -> Result<()> {
        self.run("ROLLBACK")
    }

    fn load_batch(&mut self, table: &TableSchema, rows: &[Vec<Cell>]) -> Result<()> {
        let width = table.columns.len().max(1);
        let cols: Vec<String> = table.columns.iter().map(|c| quote(&c.name)).collect();
        let tuple = format!("({})", vec!["?"; width].join(", "));
        for chunk in rows.chunks((MAX_PLACEHOLDERS / width).max(1)) {
            let sql = format!(
                "INSERT INTO {} ({}) VALUES {}",
                quote(&table.name),
                cols.join(", "),
                vec![tuple.as_str(); chunk.len()].join(", ")
            );
            let params: Vec<Value> = chunk.iter().flat_map(|r| r.iter().map(to_value)).collect();
            self.conn
                .exec_drop(sql, Params::Positional(params))
                .map_err(|e| EngineError::engine(&Dialect::Mysql, e.to_string()))?;
        }
        Ok(())
    }

    fn scan_table(&mut self, table: &TableSchema, visit: &mut dyn FnMut(&[Cell])) -> Result<u64> {
        let cols: Vec<String> = table.columns.iter().map(|c| quote(&c.name)).collect();
        let sql = format!("SELECT {} FROM {}", cols.join(", "), quote(&table.name));
        let fail = |e: mysql::Error| EngineError::engine(&Dialect::Mysql, e.to_string());
        let mut result = self.conn.exec_iter(sql, ()).map_err(fail)?;
        let columns: Vec<mysql::Column> = result.columns().as_ref().to_vec();
        let mut n = 0;
        for row in result.by_ref() {
            visit(&decode_row(&columns, row.map_err(fail)?.unwrap())?);
            n += 1;
        }
        Ok(n)
    }
}
