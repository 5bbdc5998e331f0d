//! Dual execution over a prediction set: gold on the source database,
//! prediction on the migrated target, one verdict per prediction.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use xdialect_core::{BenchmarkSpec, ComparatorConfig, Dialect, EvalRecord, Example, Prediction};
use xdialect_engines::adapters::{SqliteEngine, TypeHints};
use xdialect_engines::evaluate::{evaluate_example, EvalContext};
use xdialect_engines::migration::MigrationReport;
use xdialect_engines::{Engine, PoolOptions};

use crate::error::{HarnessError, Result};
use crate::run::JsonlLog;

/// A prediction that produced no verdict; one line of `eval_errors.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalErrorEntry {
    pub model_id: String,
    pub dialect: Dialect,
    pub example_id: i64,
    pub message: String,
}

pub struct EvalPlan<'a> {
    pub run_id: &'a str,
    pub benchmark: &'a BenchmarkSpec,
    pub dialect: &'a Dialect,
    /// Migrated target engine; `None` when evaluating the source dialect,
    /// where predictions run on the source databases themselves.
    pub target: Option<&'a dyn Engine>,
    /// db_id to its migration onto `dialect`.
    pub migrations: &'a BTreeMap<String, MigrationReport>,
    pub comparator: &'a ComparatorConfig,
    pub timeout_ms: u64,
    pub parallelism: usize,
    pub pool_size: u32,
}

#[derive(Debug, Default)]
pub struct EvalSummary {
    /// Verdicts written by this call, in (model, example) order.
    pub records: Vec<EvalRecord>,
    /// Predictions that already had a verdict.
    pub skipped: usize,
    pub errors: Vec<EvalErrorEntry>,
}

/// Refuse to evaluate against a database that was not migrated or whose
/// migration did not verify.
pub fn check_migrations<'a>(
    dialect: &Dialect,
    db_ids: impl IntoIterator<Item = &'a str>,
    migrations: &BTreeMap<String, MigrationReport>,
) -> Result<()> {
    for db_id in db_ids {
        match migrations.get(db_id) {
            None => return Err(HarnessError::Unmigrated { db_id: db_id.to_string(), dialect: dialect.clone() }),
            Some(r) if !r.verified => {
                return Err(HarnessError::Unverified {
                    db_id: db_id.to_string(),
                    dialect: dialect.clone(),
                    mismatches: r.mismatches(),
                })
            }
            Some(_) => {}
        }
    }
    Ok(())
}

struct Job<'a> {
    example: &'a Example,
    prediction: &'a Prediction,
}

/// Evaluate every prediction for `plan.dialect` that has no verdict in
/// `done` yet. Verdicts and per-prediction errors are appended as they are
/// produced; the return value lists them in key order.
pub fn run_evaluation(
    plan: &EvalPlan<'_>,
    predictions: &[Prediction],
    done: &BTreeSet<(String, i64)>,
    verdicts: &JsonlLog<EvalRecord>,
    errors: &JsonlLog<EvalErrorEntry>,
) -> Result<EvalSummary> {
    let is_source = *plan.dialect == plan.benchmark.source_dialect;
    if !is_source && plan.target.is_none() {
        return Err(HarnessError::Config(format!("no target engine given for {}", plan.dialect)));
    }
    let examples: BTreeMap<i64, &Example> = plan.benchmark.examples.iter().map(|e| (e.id, e)).collect();
    let mut summary = EvalSummary::default();
    let mut seen = BTreeSet::new();
    let mut jobs = Vec::new();
    for p in predictions.iter().filter(|p| p.dialect == *plan.dialect) {
        let key = (p.model_id.clone(), p.example_id);
        if done.contains(&key) {
            summary.skipped += 1;
            continue;
        }
        if !seen.insert(key) {
            continue; // a repeated line in the predictions file; the first one counts
        }
        match examples.get(&p.example_id) {
            Some(example) => jobs.push(Job { example, prediction: p }),
            None => {
                let entry = EvalErrorEntry {
                    model_id: p.model_id.clone(),
                    dialect: p.dialect.clone(),
                    example_id: p.example_id,
                    message: format!("example id {} is not in benchmark '{}'", p.example_id, plan.benchmark.name),
                };
                errors.append(&entry)?;
                summary.errors.push(entry);
            }
        }
    }

    let db_ids: BTreeSet<&str> = jobs.iter().map(|j| j.example.db_id.as_str()).collect();
    if !is_source {
        check_migrations(plan.dialect, db_ids.iter().copied(), plan.migrations)?;
    }
    let mut sources = BTreeMap::new();
    for db_id in &db_ids {
        let path = plan.benchmark.db_registry.get(*db_id).ok_or_else(|| {
            HarnessError::Config(format!("database '{db_id}' is not in the benchmark registry"))
        })?;
        let mut engine = SqliteEngine::open(path, PoolOptions::with_size(plan.pool_size))?;
        if !is_source {
            // decode source values with the kinds the target was loaded with
            engine = engine.with_hints(TypeHints::from_snapshot(&plan.migrations[*db_id].schema));
        }
        sources.insert(*db_id, engine);
    }

    let next = AtomicUsize::new(0);
    let out = Mutex::new((Vec::new(), Vec::new(), None::<HarnessError>));
    std::thread::scope(|s| {
        for _ in 0..plan.parallelism.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let db_id = job.example.db_id.as_str();
                let source = &sources[db_id];
                let (target, namespace): (&dyn Engine, &str) = match plan.target {
                    Some(t) if !is_source => (t, plan.migrations[db_id].namespace.as_str()),
                    _ => (source, ""),
                };
                let ctx = EvalContext {
                    run_id: plan.run_id,
                    source,
                    target,
                    namespace,
                    timeout_ms: plan.timeout_ms,
                    comparator: plan.comparator,
                };
                let result = evaluate_example(job.example, job.prediction, &ctx);
                let mut st = out.lock().unwrap_or_else(|p| p.into_inner());
                let written = match result {
                    Ok(record) => verdicts.append(&record).map(|()| st.0.push(record)),
                    Err(e) => {
                        // infrastructure trouble, not a verdict; a rerun retries it
                        let entry = EvalErrorEntry {
                            model_id: job.prediction.model_id.clone(),
                            dialect: job.prediction.dialect.clone(),
                            example_id: job.prediction.example_id,
                            message: e.to_string(),
                        };
                        errors.append(&entry).map(|()| st.1.push(entry))
                    }
                };
                if let Err(e) = written {
                    st.2.get_or_insert(e);
                    next.store(jobs.len(), Ordering::SeqCst);
                }
            });
        }
    });
    let (mut records, mut errs, failed) = out.into_inner().unwrap_or_else(|p| p.into_inner());
    if let Some(e) = failed {
        return Err(e);
    }
    records.sort_by_key(|r| r.key());
    errs.sort_by(|a, b| (&a.model_id, a.example_id).cmp(&(&b.model_id, b.example_id)));
    summary.records = records;
    summary.errors.extend(errs);
    Ok(summary)
}
