//! Normalized result comparison: decides whether a prediction's result on
//! the target engine means the same thing as the gold result on the source.

mod cells;
mod order;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use cells::{canonical_cell_text, cells_equal};
pub use order::{cell_order, lex_sort, lex_sort_with};

use crate::error::{CoreError, Result};
use crate::record::{ExecutionOutcome, IncorrectReason, Verdict};
use crate::sqltext::{contains_order_by_scoped, OrderByScope};
use crate::value::{Cell, ResultSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Match prediction columns to gold columns by lowercased name; fall back
    /// to position when the names do not cover gold but the widths agree.
    #[default]
    NameThenPositional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparatorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub trim_strings: bool,
    pub alignment: Alignment,
    pub order_by_scope: OrderByScope,
    /// Largest row count for which an unordered comparison may fall back to
    /// exact bipartite row matching after the sorted fast path fails.
    pub matching_limit: usize,
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        ComparatorConfig {
            rtol: 1e-5,
            atol: 1e-8,
            trim_strings: true,
            alignment: Alignment::NameThenPositional,
            order_by_scope: OrderByScope::Anywhere,
            matching_limit: 2000,
        }
    }
}

impl ComparatorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rtol", self.rtol), ("atol", self.atol)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CoreError::InvalidValue(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Why two results were judged different. The Display forms are stable and
/// safe to parse from logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mismatch {
    RowCount { gold: usize, pred: usize },
    MissingColumns { missing: Vec<String> },
    Value { row: usize, column: usize, name: String, gold: String, pred: String },
    UnmatchedRow { gold_row: usize },
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mismatch::RowCount { gold, pred } => {
                write!(f, "Row count mismatch: gold {gold}, prediction {pred}")
            }
            Mismatch::MissingColumns { missing } => {
                write!(f, "Missing required columns: {}", missing.join(", "))
            }
            Mismatch::Value { row, column, name, gold, pred } => write!(
                f,
                "Value mismatch at row {row}, column {column} ({name}): gold {gold}, prediction {pred}"
            ),
            Mismatch::UnmatchedRow { gold_row } => {
                write!(f, "Row mismatch: gold row {gold_row} has no equal prediction row")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Comparison {
    Equal,
    Different(Mismatch),
}

impl Comparison {
    pub fn is_equal(&self) -> bool {
        matches!(self, Comparison::Equal)
    }

    pub fn mismatch(&self) -> Option<&Mismatch> {
        match self {
            Comparison::Equal => None,
            Comparison::Different(m) => Some(m),
        }
    }
}

/// For each gold column, the index of the prediction column aligned to it.
pub fn align_columns(gold: &[String], pred: &[String]) -> std::result::Result<Vec<usize>, Vec<String>> {
    let pred_lower: Vec<String> = pred.iter().map(|c| c.to_lowercase()).collect();
    let mut used = vec![false; pred.len()];
    let mut mapping = Vec::with_capacity(gold.len());
    let mut missing = Vec::new();
    for g in gold {
        let g = g.to_lowercase();
        match (0..pred.len()).find(|&j| !used[j] && pred_lower[j] == g) {
            Some(j) => {
                used[j] = true;
                mapping.push(j);
            }
            None => missing.push(g),
        }
    }
    if missing.is_empty() {
        Ok(mapping)
    } else if gold.len() == pred.len() {
        Ok((0..gold.len()).collect())
    } else {
        Err(missing)
    }
}

/// Compare a prediction's result against the gold result.
///
/// Steps: both empty is equal; differing row counts are not; columns are
/// aligned (by name, else by position); then, unless the gold query
/// orders its output, rows are compared as multisets, otherwise in order.
pub fn compare(gold: &ResultSet, pred: &ResultSet, gold_sql: &str, cfg: &ComparatorConfig) -> Comparison {
    if gold.row_count() == 0 && pred.row_count() == 0 {
        return Comparison::Equal;
    }
    if gold.row_count() != pred.row_count() {
        return Comparison::Different(Mismatch::RowCount { gold: gold.row_count(), pred: pred.row_count() });
    }
    let mapping = match align_columns(gold.columns(), pred.columns()) {
        Ok(m) => m,
        Err(missing) => return Comparison::Different(Mismatch::MissingColumns { missing }),
    };
    let gold_rows: Vec<Vec<&Cell>> = gold.rows().iter().map(|r| r.iter().collect()).collect();
    let pred_rows: Vec<Vec<&Cell>> =
        pred.rows().iter().map(|r| mapping.iter().map(|&j| &r[j]).collect()).collect();
    let eq = cells::Prepared::new(cfg);
    let names = gold.columns();

    if contains_order_by_scoped(gold_sql, cfg.order_by_scope) {
        return match first_difference(&gold_rows, &pred_rows, &eq) {
            None => Comparison::Equal,
            Some((row, column)) => Comparison::Different(value_mismatch(&gold_rows, &pred_rows, row, column, names)),
        };
    }

    let gold_order = order::sorted_indices(&gold_rows, cfg.trim_strings);
    let pred_order = order::sorted_indices(&pred_rows, cfg.trim_strings);
    let gold_sorted: Vec<Vec<&Cell>> = gold_order.iter().map(|&i| gold_rows[i].clone()).collect();
    let pred_sorted: Vec<Vec<&Cell>> = pred_order.iter().map(|&i| pred_rows[i].clone()).collect();
    let Some((row, column)) = first_difference(&gold_sorted, &pred_sorted, &eq) else {
        return Comparison::Equal;
    };
    if gold_sorted.len() > cfg.matching_limit {
        return Comparison::Different(value_mismatch(&gold_sorted, &pred_sorted, row, column, names));
    }
    // Tolerance and cross-type equality are not transitive, so two sorted
    // sequences can disagree position by position while a one-to-one
    // pairing still exists. Settle it exactly.
    match perfect_matching(&gold_sorted, &pred_sorted, &eq) {
        Ok(()) => Comparison::Equal,
        Err(unmatched) => Comparison::Different(Mismatch::UnmatchedRow { gold_row: gold_order[unmatched] }),
    }
}

fn value_mismatch(gold: &[Vec<&Cell>], pred: &[Vec<&Cell>], row: usize, column: usize, names: &[String]) -> Mismatch {
    Mismatch::Value {
        row,
        column,
        name: names[column].to_lowercase(),
        gold: canonical_cell_text(gold[row][column]),
        pred: canonical_cell_text(pred[row][column]),
    }
}

fn rows_equal(gold: &[&Cell], pred: &[&Cell], eq: &cells::Prepared) -> bool {
    gold.iter().zip(pred).all(|(g, p)| eq.equal(p, g))
}

fn first_difference(gold: &[Vec<&Cell>], pred: &[Vec<&Cell>], eq: &cells::Prepared) -> Option<(usize, usize)> {
    gold.iter().zip(pred).enumerate().find_map(|(r, (g, p))| {
        g.iter().zip(p).position(|(gc, pc)| !eq.equal(pc, gc)).map(|c| (r, c))
    })
}

/// Kuhn's augmenting-path matching between gold and prediction rows. The
/// positional pairs of the sorted sequences seed the matching, so the work
/// is proportional to the residue. Returns the first gold row (sorted
/// index) that cannot be matched.
fn perfect_matching(gold: &[Vec<&Cell>], pred: &[Vec<&Cell>], eq: &cells::Prepared) -> std::result::Result<(), usize> {
    let n = gold.len();
    // 0 unknown, 1 equal, 2 different
    let mut adj = vec![0u8; n * n];
    let mut pred_owner: Vec<Option<usize>> = vec![None; n];
    let mut free = Vec::new();
    for i in 0..n {
        if rows_equal(&gold[i], &pred[i], eq) {
            adj[i * n + i] = 1;
            pred_owner[i] = Some(i);
        } else {
            adj[i * n + i] = 2;
            free.push(i);
        }
    }
    let mut visited = vec![false; n];
    for u in free {
        visited.iter_mut().for_each(|v| *v = false);
        // If a row cannot be augmented now it never can be, so fail fast.
        if !augment(u, gold, pred, eq, &mut adj, &mut pred_owner, &mut visited) {
            return Err(u);
        }
    }
    Ok(())
}

fn augment(
    u: usize,
    gold: &[Vec<&Cell>],
    pred: &[Vec<&Cell>],
    eq: &cells::Prepared,
    adj: &mut [u8],
    pred_owner: &mut [Option<usize>],
    visited: &mut [bool],
) -> bool {
    let n = gold.len();
    for v in 0..n {
        if visited[v] {
            continue;
        }
        let slot = u * n + v;
        if adj[slot] == 0 {
            adj[slot] = if rows_equal(&gold[u], &pred[v], eq) { 1 } else { 2 };
        }
        if adj[slot] != 1 {
            continue;
        }
        visited[v] = true;
        let take = match pred_owner[v] {
            None => true,
            Some(w) => augment(w, gold, pred, eq, adj, pred_owner, visited),
        };
        if take {
            pred_owner[v] = Some(u);
            return true;
        }
    }
    false
}

/// A verdict and, for incorrect predictions, a human-readable detail.
#[derive(Debug, Clone, PartialEq)]
pub struct Judgement {
    pub verdict: Verdict,
    pub detail: Option<String>,
}

/// Turn the two executions of one example into a verdict.
pub fn verdict_from_outcomes(
    gold: &ExecutionOutcome,
    pred: &ExecutionOutcome,
    gold_sql: &str,
    cfg: &ComparatorConfig,
) -> Judgement {
    let gold_rs = match gold {
        ExecutionOutcome::Ok { result, .. } => result,
        ExecutionOutcome::EngineError { kind, message } => {
            let message = format!("gold query failed ({kind}): {message}");
            return Judgement { verdict: Verdict::GoldFailure { message: message.clone() }, detail: Some(message) };
        }
        ExecutionOutcome::Timeout { limit_ms } => {
            let message = format!("gold query timed out after {limit_ms} ms");
            return Judgement { verdict: Verdict::GoldFailure { message: message.clone() }, detail: Some(message) };
        }
    };
    match pred {
        ExecutionOutcome::EngineError { message, .. } => Judgement {
            verdict: Verdict::Incorrect { reason: IncorrectReason::PredError },
            detail: Some(message.clone()),
        },
        ExecutionOutcome::Timeout { limit_ms } => Judgement {
            verdict: Verdict::Incorrect { reason: IncorrectReason::PredTimeout },
            detail: Some(format!("prediction timed out after {limit_ms} ms")),
        },
        ExecutionOutcome::Ok { result, .. } => match compare(gold_rs, result, gold_sql, cfg) {
            Comparison::Equal => Judgement { verdict: Verdict::Correct, detail: None },
            Comparison::Different(m) => Judgement {
                verdict: Verdict::Incorrect { reason: IncorrectReason::ResultMismatch },
                detail: Some(m.to_string()),
            },
        },
    }
}
