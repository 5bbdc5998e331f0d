//! Agreement between two sets of verdicts over the same models and
//! examples: per-query Cohen's kappa and correlation of per-model accuracy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;

use xdialect_core::metrics::{cohens_kappa, pearson_r, spearman_rho, VerdictVector};
use xdialect_core::{Dialect, EvalRecord};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementRow {
    pub label: String,
    /// (model, example) pairs judged on both sides.
    pub pairs: usize,
    pub models: usize,
    /// `None` where the statistic is undefined (constant verdicts, fewer
    /// than two models).
    pub kappa: Option<f64>,
    pub spearman: Option<f64>,
    pub pearson: Option<f64>,
    /// Fraction of queries a transpiler could rewrite, when relevant.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgreementReport {
    pub rows: Vec<AgreementRow>,
}

type PairKey = (String, i64);

fn verdict_map(records: &[&EvalRecord]) -> BTreeMap<PairKey, bool> {
    records
        .iter()
        .filter(|r| !r.verdict.is_gold_failure())
        .map(|r| ((r.model_id.clone(), r.example_id), r.verdict.is_correct()))
        .collect()
}

/// Compare two verdict sets over their shared (model, example) grid.
pub fn compare_verdicts(label: &str, a: &[&EvalRecord], b: &[&EvalRecord]) -> Result<AgreementRow> {
    let a = verdict_map(a);
    let b = verdict_map(b);
    let shared: Vec<&PairKey> = a.keys().filter(|k| b.contains_key(*k)).collect();
    if shared.is_empty() {
        return Err(HarnessError::Config(format!("{label}: the two verdict sets share no (model, example) pairs")));
    }
    let va = VerdictVector::from_pairs(shared.iter().map(|k| ((*k).clone(), a[*k])))?;
    let vb = VerdictVector::from_pairs(shared.iter().map(|k| ((*k).clone(), b[*k])))?;
    let kappa = cohens_kappa(&va, &vb).ok();

    // accuracy per model over the shared examples only, so both sides see
    // the same questions
    let mut per_model: BTreeMap<&str, (u64, u64, u64)> = BTreeMap::new();
    for k in &shared {
        let e = per_model.entry(k.0.as_str()).or_default();
        e.0 += u64::from(a[*k]);
        e.1 += u64::from(b[*k]);
        e.2 += 1;
    }
    let xs: Vec<f64> = per_model.values().map(|&(c, _, n)| 100.0 * c as f64 / n as f64).collect();
    let ys: Vec<f64> = per_model.values().map(|&(_, c, n)| 100.0 * c as f64 / n as f64).collect();
    Ok(AgreementRow {
        label: label.to_string(),
        pairs: shared.len(),
        models: per_model.len(),
        kappa,
        spearman: spearman_rho(&xs, &ys).ok(),
        pearson: pearson_r(&xs, &ys).ok(),
        coverage: None,
    })
}

/// One row per dialect in `b`. Each is compared against the `a` records of
/// `a_dialect`, or of the same dialect when `a_dialect` is `None`. Rows
/// comparing a dialect with itself are left out when `a_dialect` is set.
pub fn agreement_report(a: &[EvalRecord], b: &[EvalRecord], a_dialect: Option<&Dialect>) -> Result<AgreementReport> {
    let mut dialects: Vec<&Dialect> = b.iter().map(|r| &r.dialect).collect::<BTreeSet<_>>().into_iter().collect();
    dialects.sort_by_key(|d| (d.report_rank(), d.id().to_string()));
    let mut rows = Vec::new();
    for d in dialects {
        if a_dialect == Some(d) {
            continue;
        }
        let side_a: Vec<&EvalRecord> = a.iter().filter(|r| r.dialect == *a_dialect.unwrap_or(d)).collect();
        let side_b: Vec<&EvalRecord> = b.iter().filter(|r| r.dialect == *d).collect();
        rows.push(compare_verdicts(d.id(), &side_a, &side_b)?);
    }
    if rows.is_empty() {
        return Err(HarnessError::Config("no dialect to compare".into()));
    }
    Ok(AgreementReport { rows })
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn fmt2(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into())
}

impl AgreementReport {
    /// Column means over the rows, as a final `average` row.
    pub fn average(&self) -> AgreementRow {
        AgreementRow {
            label: "average".into(),
            pairs: self.rows.iter().map(|r| r.pairs).sum(),
            models: self.rows.iter().map(|r| r.models).max().unwrap_or(0),
            kappa: mean_of(self.rows.iter().map(|r| r.kappa)),
            spearman: mean_of(self.rows.iter().map(|r| r.spearman)),
            pearson: mean_of(self.rows.iter().map(|r| r.pearson)),
            coverage: mean_of(self.rows.iter().map(|r| r.coverage)),
        }
    }

    fn has_coverage(&self) -> bool {
        self.rows.iter().any(|r| r.coverage.is_some())
    }

    fn table(&self) -> Vec<Vec<String>> {
        let cov = self.has_coverage();
        let mut rows: Vec<&AgreementRow> = self.rows.iter().collect();
        let avg = self.average();
        if self.rows.len() > 1 {
            rows.push(&avg);
        }
        rows.into_iter()
            .map(|r| {
                let mut cells = vec![r.label.clone(), fmt2(r.kappa), fmt2(r.spearman), fmt2(r.pearson)];
                if cov {
                    cells.push(fmt2(r.coverage));
                }
                cells
            })
            .collect()
    }

    /// `dialect,kappa,spearman,pearson[,coverage]` with two decimals and a
    /// closing `average` row when there is more than one row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dialect,kappa,spearman,pearson");
        if self.has_coverage() {
            out.push_str(",coverage");
        }
        out.push('\n');
        for row in self.table() {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let cov = self.has_coverage();
        let mut out = String::from("| Dialect | κ | Spearman ρ | Pearson r |");
        if cov {
            out.push_str(" Coverage |");
        }
        let _ = write!(out, "\n|{}\n", "---|".repeat(4 + usize::from(cov)));
        for row in self.table() {
            let _ = writeln!(out, "| {} |", row.join(" | "));
        }
        out
    }

    /// Read rows in the `to_csv` layout. An `average` row is dropped, since
    /// it is always recomputed.
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
        let col = |name: &str| header.iter().position(|h| h == name);
        let label = col("dialect").ok_or_else(|| csv_err("no 'dialect' column"))?;
        let (k, s, p, c) = (col("kappa"), col("spearman"), col("pearson"), col("coverage"));
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let num = |j: Option<usize>| -> Result<Option<f64>> {
                match j.and_then(|j| rec.get(j)).map(str::trim) {
                    None | Some("") | Some("n/a") => Ok(None),
                    Some(v) => v.parse().map(Some).map_err(|e| csv_err(format!("'{v}': {e}"))),
                }
            };
            let name = rec.get(label).unwrap_or_default().trim().to_string();
            if name == "average" {
                continue;
            }
            rows.push(AgreementRow {
                label: name,
                pairs: 0,
                models: 0,
                kappa: num(k)?,
                spearman: num(s)?,
                pearson: num(p)?,
                coverage: num(c)?,
            });
        }
        Ok(AgreementReport { rows })
    }
}

fn csv_err(e: impl ToString) -> HarnessError {
    HarnessError::Config(format!("csv: {}", e.to_string()))
}
