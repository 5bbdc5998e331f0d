//! Accuracy, agreement and significance statistics.

pub mod special;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialect::Dialect;
use crate::record::{EvalRecord, Verdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no shared ids between the two verdict vectors")]
    EmptyIntersection,
    #[error("input has zero variance: {0}")]
    ZeroVariance(&'static str),
    #[error("inputs differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("kappa is undefined: expected agreement is 1 but observed agreement is {observed}")]
    KappaUndefined { observed: f64 },
    #[error("no counted records (all excluded or none given)")]
    NoCountedRecords,
    #[error("source accuracy must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("no target accuracies given")]
    NoTargets,
    #[error("duplicate id in verdict vector")]
    DuplicateId,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Per-example correctness for one (model, dialect), sorted by key.
///
/// The key is generic so verdicts can be pooled across models by keying
/// on `(model, example)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictVector<K: Ord = i64> {
    entries: Vec<(K, bool)>,
}

impl<K: Ord + Clone> VerdictVector<K> {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (K, bool)>) -> Result<Self> {
        let mut entries: Vec<(K, bool)> = pairs.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(MetricsError::DuplicateId);
        }
        Ok(VerdictVector { entries })
    }

    pub fn entries(&self) -> &[(K, bool)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Paired outcomes over the id intersection, in id order.
    pub fn paired(&self, other: &Self) -> Vec<(bool, bool)> {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.entries.len() && j < other.entries.len() {
            match self.entries[i].0.cmp(&other.entries[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push((self.entries[i].1, other.entries[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }
}

impl VerdictVector<i64> {
    /// Verdicts of records, GoldFailure excluded.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a EvalRecord>) -> Result<Self> {
        Self::from_pairs(
            records
                .into_iter()
                .filter(|r| !r.verdict.is_gold_failure())
                .map(|r| (r.example_id, r.verdict.is_correct())),
        )
    }
}

/// 2x2 agreement counts between two raters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgreementTable {
    pub both_correct: u64,
    pub only_a: u64,
    pub only_b: u64,
    pub both_wrong: u64,
}

impl AgreementTable {
    pub fn from_pairs(pairs: &[(bool, bool)]) -> Self {
        let mut t = AgreementTable::default();
        for &(a, b) in pairs {
            match (a, b) {
                (true, true) => t.both_correct += 1,
                (true, false) => t.only_a += 1,
                (false, true) => t.only_b += 1,
                (false, false) => t.both_wrong += 1,
            }
        }
        t
    }

    pub fn total(&self) -> u64 {
        self.both_correct + self.only_a + self.only_b + self.both_wrong
    }

    pub fn kappa(&self) -> Result<f64> {
        let n = self.total() as f64;
        if n == 0.0 {
            return Err(MetricsError::EmptyIntersection);
        }
        let p_o = (self.both_correct + self.both_wrong) as f64 / n;
        let a_yes = (self.both_correct + self.only_a) as f64 / n;
        let b_yes = (self.both_correct + self.only_b) as f64 / n;
        let p_e = a_yes * b_yes + (1.0 - a_yes) * (1.0 - b_yes);
        if p_e == 1.0 {
            return if p_o == 1.0 { Ok(1.0) } else { Err(MetricsError::KappaUndefined { observed: p_o }) };
        }
        Ok((p_o - p_e) / (1.0 - p_e))
    }
}

pub fn cohens_kappa<K: Ord + Clone>(a: &VerdictVector<K>, b: &VerdictVector<K>) -> Result<f64> {
    AgreementTable::from_pairs(&a.paired(b)).kappa()
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch { left: xs.len(), right: ys.len() });
    }
    if xs.len() < 2 {
        return Err(MetricsError::TooShort { needed: 2, got: xs.len() });
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(MetricsError::ZeroVariance("xs"));
    }
    if syy == 0.0 {
        return Err(MetricsError::ZeroVariance("ys"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties sharing the average of the positions they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson_r(&average_ranks(xs), &average_ranks(ys))
}

/// Two-sided McNemar p-value from the discordant counts. Exact binomial
/// below 25 discordant pairs, continuity-corrected chi-square otherwise.
pub fn mcnemar_p(only_a: u64, only_b: u64) -> f64 {
    let n = only_a + only_b;
    if n == 0 {
        return 1.0;
    }
    if n < 25 {
        let k = only_a.min(only_b);
        let mut c = 1u64; // C(n, 0)
        let mut tail = 0u64;
        for i in 0..=k {
            tail += c;
            c = c * (n - i) / (i + 1);
        }
        return (2.0 * tail as f64 / 2f64.powi(n as i32)).min(1.0);
    }
    let diff = only_a.abs_diff(only_b) as f64 - 1.0;
    let stat = diff.max(0.0).powi(2) / n as f64;
    special::chi_square_sf(stat, 1.0)
}

pub fn mcnemar_test<K: Ord + Clone>(a: &VerdictVector<K>, b: &VerdictVector<K>) -> Result<f64> {
    let pairs = a.paired(b);
    if pairs.is_empty() {
        return Err(MetricsError::EmptyIntersection);
    }
    let t = AgreementTable::from_pairs(&pairs);
    Ok(mcnemar_p(t.only_a, t.only_b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

/// Paired two-sided t-test on `xs - ys`.
///
/// Zero spread: p = 1 when the mean difference is zero, else p = 0.
pub fn paired_t_test(xs: &[f64], ys: &[f64]) -> Result<TTest> {
    check_pair(xs, ys)?;
    let d: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let var = d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    let df = n - 1.0;
    if var == 0.0 {
        return Ok(if m == 0.0 {
            TTest { t: 0.0, p: 1.0, df }
        } else {
            TTest { t: m.signum() * f64::INFINITY, p: 0.0, df }
        });
    }
    let t = m / (var.sqrt() / n.sqrt());
    Ok(TTest { t, p: special::student_t_two_sided(t, df), df })
}

/// Mean target accuracy over source accuracy; 1.0 means no degradation.
pub fn dialect_robustness(acc_source: f64, acc_targets: &[f64]) -> Result<f64> {
    if acc_source.is_nan() || acc_source <= 0.0 {
        return Err(MetricsError::NonPositiveBaseline(acc_source));
    }
    if acc_targets.is_empty() {
        return Err(MetricsError::NoTargets);
    }
    Ok(mean(acc_targets) / acc_source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AccuracyCounts {
    pub correct: u64,
    pub counted: u64,
    pub gold_failures: u64,
}

impl AccuracyCounts {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a EvalRecord>) -> Self {
        let mut c = AccuracyCounts::default();
        for r in records {
            c.add(&r.verdict);
        }
        c
    }

    pub fn add(&mut self, verdict: &Verdict) {
        match verdict {
            Verdict::GoldFailure { .. } => self.gold_failures += 1,
            Verdict::Correct => {
                self.correct += 1;
                self.counted += 1;
            }
            Verdict::Incorrect { .. } => self.counted += 1,
        }
    }

    pub fn percentage(&self) -> Result<f64> {
        if self.counted == 0 {
            return Err(MetricsError::NoCountedRecords);
        }
        Ok(100.0 * self.correct as f64 / self.counted as f64)
    }
}

/// Percentage of correct records; GoldFailure records count in neither
/// numerator nor denominator.
pub fn execution_accuracy<'a>(records: impl IntoIterator<Item = &'a EvalRecord>) -> Result<f64> {
    AccuracyCounts::from_records(records).percentage()
}

/// Models by dialects grid of accuracy percentages. Means are always
/// recomputed from the cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    models: Vec<String>,
    dialects: Vec<Dialect>,
    cells: Vec<Vec<Option<f64>>>,
}

impl AccuracyMatrix {
    /// Build from explicit cells; rows are re-sorted by mean.
    pub fn from_grid(models: Vec<String>, dialects: Vec<Dialect>, cells: Vec<Vec<Option<f64>>>) -> Self {
        assert_eq!(models.len(), cells.len(), "one row per model");
        assert!(cells.iter().all(|r| r.len() == dialects.len()), "one cell per dialect");
        let mut m = AccuracyMatrix { models, dialects, cells };
        m.sort_rows();
        m
    }

    fn sort_rows(&mut self) {
        let mut order: Vec<usize> = (0..self.models.len()).collect();
        let means: Vec<f64> = (0..self.models.len()).map(|i| self.row_mean(i).unwrap_or(f64::NEG_INFINITY)).collect();
        order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then_with(|| self.models[a].cmp(&self.models[b])));
        self.models = order.iter().map(|&i| self.models[i].clone()).collect();
        self.cells = order.iter().map(|&i| self.cells[i].clone()).collect();
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn dialects(&self) -> &[Dialect] {
        &self.dialects
    }

    pub fn cell(&self, model: usize, dialect: usize) -> Option<f64> {
        self.cells[model][dialect]
    }

    pub fn get(&self, model: &str, dialect: &Dialect) -> Option<f64> {
        let i = self.models.iter().position(|m| m == model)?;
        let j = self.dialects.iter().position(|d| d == dialect)?;
        self.cells[i][j]
    }

    fn row_mean(&self, i: usize) -> Option<f64> {
        let vals: Vec<f64> = self.cells[i].iter().flatten().copied().collect();
        (!vals.is_empty()).then(|| mean(&vals))
    }

    /// Mean over the dialects available for the model.
    pub fn model_mean(&self, model: &str) -> Option<f64> {
        self.row_mean(self.models.iter().position(|m| m == model)?)
    }

    pub fn dialect_mean(&self, dialect: &Dialect) -> Option<f64> {
        let j = self.dialects.iter().position(|d| d == dialect)?;
        let vals: Vec<f64> = self.cells.iter().filter_map(|r| r[j]).collect();
        (!vals.is_empty()).then(|| mean(&vals))
    }

    /// Robustness of one model: needs a SQLite cell and at least one other.
    pub fn robustness(&self, model: &str) -> Option<Result<f64>> {
        let i = self.models.iter().position(|m| m == model)?;
        let mut source = None;
        let mut targets = Vec::new();
        for (j, d) in self.dialects.iter().enumerate() {
            match (d, self.cells[i][j]) {
                (Dialect::Sqlite, Some(v)) => source = Some(v),
                (_, Some(v)) => targets.push(v),
                _ => {}
            }
        }
        let source = source?;
        if targets.is_empty() {
            return None;
        }
        Some(dialect_robustness(source, &targets))
    }

    /// Drop from SQLite to the other dialects, per model and pooled.
    pub fn drops(&self) -> Option<DropSummary> {
        let sj = self.dialects.iter().position(|d| *d == Dialect::Sqlite)?;
        let mut per_model = Vec::new();
        for (i, model) in self.models.iter().enumerate() {
            let Some(source) = self.cells[i][sj] else { continue };
            let targets: Vec<f64> =
                self.cells[i].iter().enumerate().filter(|(j, _)| *j != sj).filter_map(|(_, v)| *v).collect();
            if targets.is_empty() {
                continue;
            }
            let target_mean = mean(&targets);
            per_model.push(ModelDrop {
                model: model.clone(),
                source,
                target_mean,
                points: source - target_mean,
                relative_pct: if source > 0.0 { 100.0 * (source - target_mean) / source } else { f64::NAN },
            });
        }
        if per_model.is_empty() {
            return None;
        }
        let points: Vec<f64> = per_model.iter().map(|d| d.points).collect();
        let rel: Vec<f64> = per_model.iter().map(|d| d.relative_pct).collect();
        let src_total: f64 = per_model.iter().map(|d| d.source).sum();
        let tgt_total: f64 = per_model.iter().map(|d| d.target_mean).sum();
        Some(DropSummary {
            mean_points: mean(&points),
            mean_relative_pct: mean(&rel),
            pooled_relative_pct: 100.0 * (src_total - tgt_total) / src_total,
            per_model,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDrop {
    pub model: String,
    pub source: f64,
    pub target_mean: f64,
    /// Accuracy points lost.
    pub points: f64,
    /// Points lost as a percentage of the source accuracy.
    pub relative_pct: f64,
}

/// Several aggregations of the SQLite-to-target drop, since none is
/// canonical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropSummary {
    pub per_model: Vec<ModelDrop>,
    pub mean_points: f64,
    pub mean_relative_pct: f64,
    pub pooled_relative_pct: f64,
}

/// Accuracy per (model, dialect) over all records of a run. Cells with no
/// counted record stay empty.
pub fn accuracy_matrix(records: &[EvalRecord]) -> AccuracyMatrix {
    let mut groups: BTreeMap<(String, Dialect), AccuracyCounts> = BTreeMap::new();
    let mut models = BTreeSet::new();
    let mut dialects = BTreeSet::new();
    for r in records {
        models.insert(r.model_id.clone());
        dialects.insert(r.dialect.clone());
        groups.entry((r.model_id.clone(), r.dialect.clone())).or_default().add(&r.verdict);
    }
    let mut dialects: Vec<Dialect> = dialects.into_iter().collect();
    dialects.sort_by(|a, b| a.report_rank().cmp(&b.report_rank()).then_with(|| a.id().cmp(b.id())));
    let models: Vec<String> = models.into_iter().collect();
    let cells = models
        .iter()
        .map(|m| {
            dialects
                .iter()
                .map(|d| groups.get(&(m.clone(), d.clone())).and_then(|c| c.percentage().ok()))
                .collect()
        })
        .collect();
    AccuracyMatrix::from_grid(models, dialects, cells)
}

#[cfg(test)]
mod tests;
