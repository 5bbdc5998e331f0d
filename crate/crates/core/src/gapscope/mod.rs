//! Gap errors: examples a model gets right on the source dialect but wrong
//! on a target dialect, and their root-cause classification.

mod rules;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use rules::{aggregation_signature, parse_schema_ddl, unknown_identifiers, RuleJudge};

use crate::benchmark::Example;
use crate::dialect::Dialect;
use crate::record::{ErrorKind, EvalRecord, OutcomeStatus, Verdict};

/// Judge protocol shipped with the crate; `{prediction_json}` is filled in.
pub const DEFAULT_JUDGE_TEMPLATE: &str = include_str!("../../templates/judge_v1.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapError {
    pub example_id: i64,
    pub model_id: String,
    pub dialect: Dialect,
    pub pred_sql: String,
    pub gold_sql: String,
    pub question: String,
    /// Target schema in prompt-mode DDL.
    pub schema: String,
    pub pred_error: Option<String>,
    pub pred_error_kind: Option<ErrorKind>,
    /// Always false for a gap; kept because the judge protocol asks for it.
    pub results_equal: bool,
}

/// Orders gaps and their classifications.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GapKey {
    pub model_id: String,
    pub dialect: Dialect,
    pub example_id: i64,
}

impl fmt::Display for GapKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.model_id, self.dialect, self.example_id)
    }
}

impl GapError {
    pub fn key(&self) -> GapKey {
        GapKey { model_id: self.model_id.clone(), dialect: self.dialect.clone(), example_id: self.example_id }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    SchemaLinkingError,
    FilteringError,
    AggregationError,
    DialectError,
    InvalidEvaluation,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 5] = [
        ErrorCategory::SchemaLinkingError,
        ErrorCategory::FilteringError,
        ErrorCategory::AggregationError,
        ErrorCategory::DialectError,
        ErrorCategory::InvalidEvaluation,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ErrorCategory::SchemaLinkingError => "schema_linking_error",
            ErrorCategory::FilteringError => "filtering_error",
            ErrorCategory::AggregationError => "aggregation_error",
            ErrorCategory::DialectError => "dialect_error",
            ErrorCategory::InvalidEvaluation => "invalid_evaluation",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ErrorCategory::SchemaLinkingError => "Schema Linking",
            ErrorCategory::FilteringError => "Filtering/Logic",
            ErrorCategory::AggregationError => "Aggregation/Grouping",
            ErrorCategory::DialectError => "Dialect Syntax",
            ErrorCategory::InvalidEvaluation => "Evaluation Framework",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Classification {
    pub question_id: i64,
    pub category: ErrorCategory,
    pub explanation: String,
    pub evidence: String,
}

/// A classification tied to the gap it explains; one line of
/// `gap_classifications.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedGap {
    #[serde(flatten)]
    pub key: GapKey,
    pub classification: Classification,
    /// Judge attempts used, including the successful one.
    pub attempts: u32,
}

/// Question, gold query and target schemas needed to describe a gap.
#[derive(Debug, Clone, Default)]
pub struct GapContext {
    pub examples: BTreeMap<i64, Example>,
    /// (db_id, dialect) -> prompt-mode DDL
    pub schemas: BTreeMap<(String, Dialect), String>,
}

fn pred_error_of(r: &EvalRecord) -> (Option<String>, Option<ErrorKind>) {
    match r.pred.status {
        OutcomeStatus::Error => (r.pred.message.clone(), r.pred.error_kind),
        OutcomeStatus::Timeout => {
            (Some(format!("timeout after {} ms", r.pred.limit_ms.unwrap_or_default())), None)
        }
        OutcomeStatus::Skipped => (r.pred.message.clone(), None),
        OutcomeStatus::Ok => (None, None),
    }
}

/// Pairs each target record with the same model's source record for the
/// same example and keeps those correct on source but not on target.
/// GoldFailure on either side drops the pair.
pub fn extract_gap_errors(source: &[EvalRecord], target: &[EvalRecord], ctx: &GapContext) -> Vec<GapError> {
    let by_key: BTreeMap<(&str, i64), &EvalRecord> =
        source.iter().map(|r| ((r.model_id.as_str(), r.example_id), r)).collect();
    let mut gaps: Vec<GapError> = target
        .iter()
        .filter_map(|t| {
            let s = by_key.get(&(t.model_id.as_str(), t.example_id))?;
            let gap = s.verdict == Verdict::Correct && matches!(t.verdict, Verdict::Incorrect { .. });
            if !gap {
                return None;
            }
            let example = ctx.examples.get(&t.example_id);
            let schema = example
                .and_then(|e| ctx.schemas.get(&(e.db_id.clone(), t.dialect.clone())))
                .cloned()
                .unwrap_or_default();
            let (pred_error, pred_error_kind) = pred_error_of(t);
            Some(GapError {
                example_id: t.example_id,
                model_id: t.model_id.clone(),
                dialect: t.dialect.clone(),
                pred_sql: t.pred_sql.clone(),
                gold_sql: example.map(|e| e.gold_sql.clone()).unwrap_or_default(),
                question: example.map(|e| e.question.clone()).unwrap_or_default(),
                schema,
                pred_error,
                pred_error_kind,
                results_equal: false,
            })
        })
        .collect();
    gaps.sort_by_key(GapError::key);
    gaps
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GapscopeError {
    #[error("judge template has no {{prediction_json}} placeholder")]
    MissingPlaceholder,
    #[error("no classifications to summarise")]
    Empty,
}

/// Fill the judge template. Doubled braces in the template are literal
/// braces, as in the protocol's original format-string form.
pub fn build_judge_prompt(gap: &GapError, template: &str) -> Result<String, GapscopeError> {
    const PLACEHOLDER: &str = "{prediction_json}";
    if !template.contains(PLACEHOLDER) {
        return Err(GapscopeError::MissingPlaceholder);
    }
    let payload = serde_json::json!({
        "question_id": gap.example_id,
        "gen_type": gap.dialect.id(),
        "schema": gap.schema,
        "predicted_sql": gap.pred_sql,
        "gold_sql": gap.gold_sql,
        "question": gap.question,
        "pred_error": gap.pred_error,
        "results_equal": gap.results_equal,
    });
    let json = serde_json::to_string_pretty(&payload).expect("json value serializes");
    let mut out = String::with_capacity(template.len() + json.len());
    let mut rest = template;
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix(PLACEHOLDER) {
            out.push_str(&json);
            rest = r;
        } else if let Some(r) = rest.strip_prefix("{{") {
            out.push('{');
            rest = r;
        } else if let Some(r) = rest.strip_prefix("}}") {
            out.push('}');
            rest = r;
        } else {
            let ch = rest.chars().next().expect("non-empty");
            out.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
    }
    Ok(out)
}

/// Parse a judge reply: a JSON object with exactly the four keys, or the
/// literal `null`, optionally inside a code fence.
pub fn parse_judge_output(text: &str) -> Result<Option<Classification>, String> {
    let mut body = text.trim();
    if let Some(inner) = body.strip_prefix("```") {
        let inner = inner.strip_prefix("json").unwrap_or(inner);
        body = inner.strip_suffix("```").ok_or("unterminated code fence")?.trim();
    }
    if body == "null" {
        return Ok(None);
    }
    serde_json::from_str::<Classification>(body).map(Some).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeError {
    /// Worth retrying: transport failure, rate limit, server error.
    #[error("transient judge failure: {0}")]
    Transient(String),
    #[error("judge failure: {0}")]
    Fatal(String),
}

pub trait Judge: Send + Sync {
    fn judge(&self, gap: &GapError, prompt: &str) -> Result<String, JudgeError>;
}

#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    /// Extra attempts after the first, for malformed output and transient
    /// failures alike.
    pub retries: u32,
    pub max_in_flight: usize,
    pub backoff: Duration,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { retries: 2, max_in_flight: 4, backoff: Duration::from_millis(200) }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("judge unavailable ({message}); unclassified gaps: {}", unclassified.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", "))]
pub struct ClassifyError {
    pub message: String,
    pub unclassified: Vec<GapKey>,
    /// Whatever was classified before the failure, in gap order.
    pub classified: Vec<ClassifiedGap>,
}

pub const UNPARSEABLE: &str = "unparseable judge output";

fn classify_one(gap: &GapError, judge: &dyn Judge, template: &str, opts: &ClassifyOptions) -> Result<ClassifiedGap, JudgeError> {
    let prompt = build_judge_prompt(gap, template).map_err(|e| JudgeError::Fatal(e.to_string()))?;
    let mut last_reply = String::new();
    let mut transient = None;
    for attempt in 0..=opts.retries {
        if attempt > 0 && transient.is_some() {
            std::thread::sleep(opts.backoff * 2u32.saturating_pow(attempt - 1));
        }
        match judge.judge(gap, &prompt) {
            Err(JudgeError::Fatal(m)) => return Err(JudgeError::Fatal(m)),
            Err(JudgeError::Transient(m)) => transient = Some(m),
            Ok(reply) => {
                transient = None;
                // A gap is a failure by construction, so a null verdict or a
                // reply about another question is as unusable as bad JSON.
                if let Ok(Some(c)) = parse_judge_output(&reply) {
                    if c.question_id == gap.example_id {
                        return Ok(ClassifiedGap { key: gap.key(), classification: c, attempts: attempt + 1 });
                    }
                }
                last_reply = reply;
            }
        }
    }
    if let Some(m) = transient {
        return Err(JudgeError::Transient(m));
    }
    let mut evidence: String = last_reply.chars().take(200).collect();
    if evidence.len() < last_reply.len() {
        evidence.push('…');
    }
    Ok(ClassifiedGap {
        key: gap.key(),
        classification: Classification {
            question_id: gap.example_id,
            category: ErrorCategory::InvalidEvaluation,
            explanation: UNPARSEABLE.to_string(),
            evidence,
        },
        attempts: opts.retries + 1,
    })
}

/// Classify every gap with at most `max_in_flight` judge calls at once.
/// Output is in gap-key order whatever the completion order.
pub fn classify_gap_errors(
    gaps: &[GapError],
    judge: &dyn Judge,
    template: &str,
    opts: &ClassifyOptions,
) -> Result<Vec<ClassifiedGap>, ClassifyError> {
    if !template.contains("{prediction_json}") {
        return Err(ClassifyError {
            message: GapscopeError::MissingPlaceholder.to_string(),
            unclassified: gaps.iter().map(GapError::key).collect(),
            classified: vec![],
        });
    }
    let mut order: Vec<&GapError> = gaps.iter().collect();
    order.sort_by_key(|g| g.key());
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<Option<ClassifiedGap>>> = Mutex::new(vec![None; order.len()]);
    let failure: Mutex<Option<String>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..opts.max_in_flight.max(1).min(order.len().max(1)) {
            s.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(gap) = order.get(i) else { return };
                match classify_one(gap, judge, template, opts) {
                    Ok(c) => results.lock().expect("results lock")[i] = Some(c),
                    Err(e) => {
                        abort.store(true, Ordering::SeqCst);
                        failure.lock().expect("failure lock").get_or_insert(e.to_string());
                        return;
                    }
                }
            });
        }
    });
    let results = results.into_inner().expect("results lock");
    match failure.into_inner().expect("failure lock") {
        None => Ok(results.into_iter().map(|c| c.expect("every gap visited")).collect()),
        Some(message) => {
            let unclassified = order.iter().zip(&results).filter(|(_, r)| r.is_none()).map(|(g, _)| g.key()).collect();
            Err(ClassifyError { message, unclassified, classified: results.into_iter().flatten().collect() })
        }
    }
}

/// Round half to even at `decimals` places, exactly, for `count / total`
/// expressed as a percentage.
pub fn percent_half_even(count: u64, total: u64, decimals: u32) -> f64 {
    assert!(total > 0, "total must be positive");
    let scale = 10u128.pow(decimals);
    let num = count as u128 * 100 * scale;
    let den = total as u128;
    let (q, r) = (num / den, num % den);
    let q = match (2 * r).cmp(&den) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal if q % 2 == 1 => q + 1,
        _ => q,
    };
    q as f64 / scale as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub category: ErrorCategory,
    pub count: u64,
    /// Exact share of all classifications, in percent.
    pub pct: f64,
    /// Share among determinate errors (invalid_evaluation excluded); None
    /// for invalid_evaluation itself or when nothing is determinate.
    pub determinate_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDistribution {
    pub total: u64,
    pub determinate_total: u64,
    pub shares: Vec<CategoryShare>,
}

impl CategoryDistribution {
    pub fn share(&self, category: ErrorCategory) -> &CategoryShare {
        self.shares.iter().find(|s| s.category == category).expect("all categories present")
    }

    /// Percentages rounded half-even to one decimal.
    pub fn rounded(&self) -> Vec<(ErrorCategory, f64)> {
        self.shares.iter().map(|s| (s.category, percent_half_even(s.count, self.total, 1))).collect()
    }
}

pub fn distribution_from_counts(counts: &BTreeMap<ErrorCategory, u64>) -> Result<CategoryDistribution, GapscopeError> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(GapscopeError::Empty);
    }
    let invalid = counts.get(&ErrorCategory::InvalidEvaluation).copied().unwrap_or(0);
    let determinate_total = total - invalid;
    let shares = ErrorCategory::ALL
        .iter()
        .map(|&category| {
            let count = counts.get(&category).copied().unwrap_or(0);
            CategoryShare {
                category,
                count,
                pct: 100.0 * count as f64 / total as f64,
                determinate_pct: (category != ErrorCategory::InvalidEvaluation && determinate_total > 0)
                    .then(|| 100.0 * count as f64 / determinate_total as f64),
            }
        })
        .collect();
    Ok(CategoryDistribution { total, determinate_total, shares })
}

pub fn category_distribution<'a>(
    classifications: impl IntoIterator<Item = &'a Classification>,
) -> Result<CategoryDistribution, GapscopeError> {
    let mut counts = BTreeMap::new();
    for c in classifications {
        *counts.entry(c.category).or_insert(0u64) += 1;
    }
    distribution_from_counts(&counts)
}

#[cfg(test)]
mod tests;
