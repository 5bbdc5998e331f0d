use std::str::FromStr;

use bigdecimal::BigDecimal;
use chrono::SecondsFormat;

use super::ComparatorConfig;
use crate::value::{parse_iso_date, parse_iso_timestamp, Cell};

/// Deterministic text form of a cell, shared by sorting diagnostics and
/// migration checksums.
pub fn canonical_cell_text(cell: &Cell) -> String {
    match cell {
        Cell::Null => "␀".to_string(),
        Cell::Int(v) => v.to_string(),
        Cell::Float(v) => float_text(*v),
        Cell::Decimal(d) => d.normalized_string(),
        Cell::Text(s) => s.clone(),
        Cell::Bool(b) => if *b { "1" } else { "0" }.to_string(),
        Cell::Date(d) => d.format("%Y-%m-%d").to_string(),
        Cell::Timestamp(t) => t.to_rfc3339_opts(SecondsFormat::AutoSi, true),
        Cell::Bytes(b) => hex::encode(b),
    }
}

fn float_text(v: f64) -> String {
    if v == 0.0 {
        // -0.0 and 0.0 are the same value
        "0".to_string()
    } else {
        v.to_string()
    }
}

/// Cell equality under the comparator's rules. `gold` is the reference for
/// the relative tolerance.
pub fn cells_equal(pred: &Cell, gold: &Cell, cfg: &ComparatorConfig) -> bool {
    Prepared::new(cfg).equal(pred, gold)
}

/// Exact number or a float, for tolerance checks.
pub(crate) enum Num {
    Exact(BigDecimal),
    Float(f64),
}

pub(crate) fn numeric(cell: &Cell) -> Option<Num> {
    Some(match cell {
        Cell::Int(v) => Num::Exact(BigDecimal::from(*v)),
        Cell::Decimal(d) => Num::Exact(d.as_big().clone()),
        Cell::Bool(b) => Num::Exact(BigDecimal::from(*b as i64)),
        Cell::Float(v) => Num::Float(*v),
        _ => return None,
    })
}

/// Exact decimal value of a finite float's shortest round-trip form.
pub(crate) fn float_to_big(v: f64) -> BigDecimal {
    BigDecimal::from_str(&format!("{v:e}")).expect("finite float renders as a decimal")
}

fn big_to_f64(v: &BigDecimal) -> f64 {
    v.to_plain_string().parse().unwrap_or(f64::NAN)
}

/// Config with the tolerances pre-converted for exact arithmetic.
pub(crate) struct Prepared {
    rtol: f64,
    atol: f64,
    rtol_exact: BigDecimal,
    atol_exact: BigDecimal,
    trim: bool,
}

impl Prepared {
    pub(crate) fn new(cfg: &ComparatorConfig) -> Self {
        Prepared {
            rtol: cfg.rtol,
            atol: cfg.atol,
            rtol_exact: float_to_big(cfg.rtol),
            atol_exact: float_to_big(cfg.atol),
            trim: cfg.trim_strings,
        }
    }

    fn text<'a>(&self, s: &'a str) -> &'a str {
        if self.trim {
            s.trim()
        } else {
            s
        }
    }

    pub(crate) fn equal(&self, pred: &Cell, gold: &Cell) -> bool {
        use Cell::*;
        match (pred, gold) {
            (Null, Null) => true,
            (Null, _) | (_, Null) => false,
            (Text(p), Text(g)) => self.text(p) == self.text(g),
            (Date(d), Text(s)) | (Text(s), Date(d)) => parse_iso_date(self.text(s)) == Some(*d),
            (Timestamp(t), Text(s)) | (Text(s), Timestamp(t)) => {
                parse_iso_timestamp(self.text(s)) == Some(*t)
            }
            (Date(p), Date(g)) => p == g,
            (Timestamp(p), Timestamp(g)) => p == g,
            (Bytes(p), Bytes(g)) => p == g,
            _ => match (numeric(pred), numeric(gold)) {
                (Some(p), Some(g)) => self.numbers_close(p, g),
                _ => false,
            },
        }
    }

    fn numbers_close(&self, pred: Num, gold: Num) -> bool {
        match (pred, gold) {
            (Num::Exact(p), Num::Exact(g)) => {
                let diff = (&p - &g).abs();
                diff <= &self.atol_exact + &self.rtol_exact * g.abs()
            }
            (p, g) => {
                let p = match p {
                    Num::Exact(v) => big_to_f64(&v),
                    Num::Float(v) => v,
                };
                let g = match g {
                    Num::Exact(v) => big_to_f64(&v),
                    Num::Float(v) => v,
                };
                if p.is_nan() || g.is_nan() {
                    return p.is_nan() && g.is_nan();
                }
                if p.is_infinite() || g.is_infinite() {
                    return p == g;
                }
                (p - g).abs() <= self.atol + self.rtol * g.abs()
            }
        }
    }
}

