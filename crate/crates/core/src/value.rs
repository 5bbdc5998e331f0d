//! Engine-neutral values and tabular results.

use std::fmt;
use std::str::FromStr;

use bigdecimal::num_bigint::BigInt;
use bigdecimal::BigDecimal;
use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Exact fixed-point number that remembers its scale.
///
/// Equality is structural: `1.50` and `1.5` are different values here.
/// Numeric closeness is the comparator's business, not this type's.
#[derive(Debug, Clone)]
pub struct Decimal(BigDecimal);

impl Decimal {
    pub fn new(digits: BigInt, scale: i64) -> Self {
        Decimal(BigDecimal::new(digits, scale))
    }

    pub fn from_big(value: BigDecimal) -> Self {
        Decimal(value)
    }

    pub fn as_big(&self) -> &BigDecimal {
        &self.0
    }

    pub fn scale(&self) -> i64 {
        self.0.as_bigint_and_exponent().1
    }

    pub fn to_f64(&self) -> f64 {
        // Plain-string parse is correctly rounded; BigDecimal's own conversion is not
        // guaranteed to be for very long mantissas.
        self.0.to_plain_string().parse().unwrap_or(f64::NAN)
    }

    /// Value without trailing fractional zeros, in plain notation.
    pub fn normalized_string(&self) -> String {
        let s = self.0.normalized().to_plain_string();
        if s == "-0" {
            "0".to_string()
        } else {
            s
        }
    }
}

impl PartialEq for Decimal {
    fn eq(&self, other: &Self) -> bool {
        self.0.as_bigint_and_exponent() == other.0.as_bigint_and_exponent()
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_plain_string())
    }
}

impl FromStr for Decimal {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        BigDecimal::from_str(s.trim())
            .map(Decimal)
            .map_err(|e| CoreError::InvalidValue(format!("decimal '{s}': {e}")))
    }
}

/// One value produced by an engine, decoded into an engine-neutral form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CellRepr", try_from = "CellRepr")]
pub enum Cell {
    Null,
    Int(i64),
    Float(f64),
    Decimal(Decimal),
    /// Stored exactly as the engine returned it; trimming only happens
    /// inside comparison.
    Text(String),
    Bool(bool),
    Date(NaiveDate),
    /// Always UTC, truncated to microseconds.
    Timestamp(DateTime<Utc>),
    Bytes(Vec<u8>),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn decimal(s: &str) -> Result<Self> {
        Ok(Cell::Decimal(s.parse()?))
    }

    /// Timestamp from any UTC instant, truncated to microsecond precision.
    pub fn timestamp(at: DateTime<Utc>) -> Self {
        Cell::Timestamp(at.trunc_subsecs(6))
    }

    /// Naive timestamps are interpreted as UTC.
    pub fn naive_timestamp(at: NaiveDateTime) -> Self {
        Cell::timestamp(at.and_utc())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Cell::Int(_) | Cell::Float(_) | Cell::Decimal(_))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Cell::Null => "null",
            Cell::Int(_) => "int",
            Cell::Float(_) => "float",
            Cell::Decimal(_) => "decimal",
            Cell::Text(_) => "text",
            Cell::Bool(_) => "bool",
            Cell::Date(_) => "date",
            Cell::Timestamp(_) => "timestamp",
            Cell::Bytes(_) => "bytes",
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
enum CellRepr {
    Null,
    Int(i64),
    Float(FloatRepr),
    Decimal(String),
    Text(String),
    Bool(bool),
    Date(String),
    Timestamp(String),
    Bytes(String),
}

/// JSON has no NaN or infinities, so those travel as strings.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FloatRepr {
    Finite(f64),
    Special(String),
}

impl From<Cell> for CellRepr {
    fn from(cell: Cell) -> Self {
        match cell {
            Cell::Null => CellRepr::Null,
            Cell::Int(v) => CellRepr::Int(v),
            Cell::Float(v) if v.is_finite() => CellRepr::Float(FloatRepr::Finite(v)),
            Cell::Float(v) => CellRepr::Float(FloatRepr::Special(
                if v.is_nan() {
                    "NaN"
                } else if v > 0.0 {
                    "inf"
                } else {
                    "-inf"
                }
                .to_string(),
            )),
            Cell::Decimal(d) => CellRepr::Decimal(d.to_string()),
            Cell::Text(s) => CellRepr::Text(s),
            Cell::Bool(b) => CellRepr::Bool(b),
            Cell::Date(d) => CellRepr::Date(d.format("%Y-%m-%d").to_string()),
            Cell::Timestamp(t) => {
                CellRepr::Timestamp(t.format("%Y-%m-%dT%H:%M:%S%.6fZ").to_string())
            }
            Cell::Bytes(b) => CellRepr::Bytes(hex::encode(b)),
        }
    }
}

impl TryFrom<CellRepr> for Cell {
    type Error = CoreError;

    fn try_from(repr: CellRepr) -> Result<Self> {
        Ok(match repr {
            CellRepr::Null => Cell::Null,
            CellRepr::Int(v) => Cell::Int(v),
            CellRepr::Float(FloatRepr::Finite(v)) => Cell::Float(v),
            CellRepr::Float(FloatRepr::Special(s)) => Cell::Float(match s.as_str() {
                "NaN" => f64::NAN,
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                other => return Err(CoreError::InvalidValue(format!("float '{other}'"))),
            }),
            CellRepr::Decimal(s) => Cell::Decimal(s.parse()?),
            CellRepr::Text(s) => Cell::Text(s),
            CellRepr::Bool(b) => Cell::Bool(b),
            CellRepr::Date(s) => Cell::Date(
                parse_iso_date(&s).ok_or_else(|| CoreError::InvalidValue(format!("date '{s}'")))?,
            ),
            CellRepr::Timestamp(s) => Cell::timestamp(
                parse_iso_timestamp(&s)
                    .ok_or_else(|| CoreError::InvalidValue(format!("timestamp '{s}'")))?,
            ),
            CellRepr::Bytes(s) => Cell::Bytes(
                hex::decode(&s).map_err(|e| CoreError::InvalidValue(format!("bytes: {e}")))?,
            ),
        })
    }
}

/// Parse a strict `YYYY-MM-DD` date.
pub fn parse_iso_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// Parse `YYYY-MM-DD[ T]HH:MM:SS[.frac][Z|±HH:MM]` into a UTC instant.
/// A missing offset means UTC.
pub fn parse_iso_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let b = s.as_bytes();
    if b.len() < 19 || !(b[10] == b' ' || b[10] == b'T') {
        return None;
    }
    let date = parse_iso_date(&s[..10])?;
    let rest = &s[11..];
    let (clock, offset) = split_offset(rest)?;
    if clock.len() < 8 || clock.as_bytes()[2] != b':' || clock.as_bytes()[5] != b':' {
        return None;
    }
    if clock.len() > 8 {
        let frac = &clock[8..];
        if !frac.starts_with('.') || frac.len() < 2 || !frac[1..].bytes().all(|c| c.is_ascii_digit()) {
            return None;
        }
    }
    let time = NaiveTime::parse_from_str(clock, "%H:%M:%S%.f").ok()?;
    let naive = date.and_time(time);
    let utc = naive.and_utc() - chrono::Duration::seconds(offset);
    Some(utc.trunc_subsecs(6))
}

/// Returns the clock part and the offset in seconds east of UTC.
fn split_offset(rest: &str) -> Option<(&str, i64)> {
    if let Some(clock) = rest.strip_suffix('Z') {
        return Some((clock, 0));
    }
    if rest.len() > 8 {
        let tail_start = rest.len().saturating_sub(6);
        let tail = &rest[tail_start..];
        let tb = tail.as_bytes();
        if (tb[0] == b'+' || tb[0] == b'-') && tb[3] == b':' {
            let hours: i64 = tail[1..3].parse().ok()?;
            let minutes: i64 = tail[4..6].parse().ok()?;
            let sign = if tb[0] == b'-' { -1 } else { 1 };
            return Some((&rest[..tail_start], sign * (hours * 3600 + minutes * 60)));
        }
    }
    Some((rest, 0))
}

/// Ordered, fully materialised output of one query.
///
/// Column names may repeat; position is what identifies a column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawResultSet")]
pub struct ResultSet {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

#[derive(Deserialize)]
struct RawResultSet {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl TryFrom<RawResultSet> for ResultSet {
    type Error = CoreError;

    fn try_from(raw: RawResultSet) -> Result<Self> {
        ResultSet::new(raw.columns, raw.rows)
    }
}

impl ResultSet {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self> {
        let expected = columns.len();
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != expected) {
            return Err(CoreError::RowWidth { row, got: r.len(), expected });
        }
        Ok(ResultSet { columns, rows })
    }

    pub fn empty(columns: Vec<String>) -> Self {
        ResultSet { columns, rows: Vec::new() }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn into_parts(self) -> (Vec<String>, Vec<Vec<Cell>>) {
        (self.columns, self.rows)
    }

    /// Same cells, different headers. Width must match.
    pub fn with_columns(self, columns: Vec<String>) -> Result<Self> {
        ResultSet::new(columns, self.rows)
    }

    /// Same headers, rows replaced.
    pub fn with_rows(self, rows: Vec<Vec<Cell>>) -> Result<Self> {
        ResultSet::new(self.columns, rows)
    }
}
