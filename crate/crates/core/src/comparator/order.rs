//! Total order over cells used to put unordered results in a canonical
//! row order.
//!
//! Rank: numeric (Bool as 0/1, Int, Float, Decimal compared exactly as one
//! class) < Date < Timestamp < Text < Bytes < Null. Text that reads as an
//! ISO date or timestamp sorts with that temporal rank, so a date and its
//! string rendering land next to each other.

use std::cmp::Ordering;

use bigdecimal::BigDecimal;
use chrono::{DateTime, NaiveDate, Utc};

use super::cells::float_to_big;
use super::ComparatorConfig;
use crate::value::{parse_iso_date, parse_iso_timestamp, Cell, ResultSet};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum NumKey {
    NegInf,
    Finite(BigDecimal),
    PosInf,
    NaN,
}

// Variant order is the rank order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum SortKey {
    Num(NumKey),
    Date(NaiveDate),
    Timestamp(DateTime<Utc>),
    Text(String),
    Bytes(Vec<u8>),
    Null,
}

fn sort_key(cell: &Cell, trim: bool) -> SortKey {
    match cell {
        Cell::Null => SortKey::Null,
        Cell::Int(v) => SortKey::Num(NumKey::Finite(BigDecimal::from(*v))),
        Cell::Bool(b) => SortKey::Num(NumKey::Finite(BigDecimal::from(*b as i64))),
        Cell::Decimal(d) => SortKey::Num(NumKey::Finite(d.as_big().normalized())),
        Cell::Float(v) if v.is_nan() => SortKey::Num(NumKey::NaN),
        Cell::Float(v) if *v == f64::INFINITY => SortKey::Num(NumKey::PosInf),
        Cell::Float(v) if *v == f64::NEG_INFINITY => SortKey::Num(NumKey::NegInf),
        Cell::Float(v) => SortKey::Num(NumKey::Finite(float_to_big(*v).normalized())),
        Cell::Date(d) => SortKey::Date(*d),
        Cell::Timestamp(t) => SortKey::Timestamp(*t),
        Cell::Text(s) => {
            let s = if trim { s.trim() } else { s.as_str() };
            if let Some(d) = parse_iso_date(s) {
                SortKey::Date(d)
            } else if let Some(t) = parse_iso_timestamp(s) {
                SortKey::Timestamp(t)
            } else {
                SortKey::Text(s.to_string())
            }
        }
        Cell::Bytes(b) => SortKey::Bytes(b.clone()),
    }
}

/// Compare two cells under the sort order.
pub fn cell_order(a: &Cell, b: &Cell, trim: bool) -> Ordering {
    sort_key(a, trim).cmp(&sort_key(b, trim))
}

/// Stable lexicographic row order: indices into `rows`.
pub(crate) fn sorted_indices(rows: &[Vec<&Cell>], trim: bool) -> Vec<usize> {
    let keys: Vec<Vec<SortKey>> =
        rows.iter().map(|r| r.iter().map(|c| sort_key(c, trim)).collect()).collect();
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    idx
}

/// Sort rows column by column with NULLs last; columns are untouched.
pub fn lex_sort(rs: &ResultSet) -> ResultSet {
    lex_sort_with(rs, &ComparatorConfig::default())
}

pub fn lex_sort_with(rs: &ResultSet, cfg: &ComparatorConfig) -> ResultSet {
    let rows: Vec<Vec<&Cell>> = rs.rows().iter().map(|r| r.iter().collect()).collect();
    let order = sorted_indices(&rows, cfg.trim_strings);
    let sorted = order.into_iter().map(|i| rs.rows()[i].clone()).collect();
    ResultSet::new(rs.columns().to_vec(), sorted).expect("sorting preserves row width")
}
