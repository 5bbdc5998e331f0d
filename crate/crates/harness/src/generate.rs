//! Prediction generation: one prompt per example, bounded parallelism,
//! append-only persistence, resumable by example id.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use xdialect_core::{BenchmarkSpec, Dialect, Example, Prediction};

use crate::client::{ChatError, Completer};
use crate::error::{HarnessError, Result};
use crate::prompt::{build_prompt, extract_sql, DialectGuidelines};
use crate::run::JsonlLog;

pub struct GenerateRequest<'a> {
    pub benchmark: &'a BenchmarkSpec,
    pub dialect: &'a Dialect,
    /// db_id to prompt-mode DDL.
    pub ddl: &'a BTreeMap<String, String>,
    pub guidelines: &'a DialectGuidelines,
    pub parallelism: usize,
}

#[derive(Debug, Default)]
pub struct GenerateSummary {
    /// Examples that already had a prediction.
    pub skipped: usize,
    pub written: usize,
    /// Example id to the endpoint error that left it without a prediction.
    pub failures: BTreeMap<i64, String>,
    /// Set when an authentication failure stopped the whole stage.
    pub aborted: Option<String>,
    /// Examples never attempted because of the abort.
    pub not_attempted: Vec<i64>,
}

impl GenerateSummary {
    pub fn is_complete(&self) -> bool {
        self.aborted.is_none() && self.failures.is_empty() && self.not_attempted.is_empty()
    }

    pub fn pending(&self) -> Vec<i64> {
        let mut ids: Vec<i64> = self.failures.keys().copied().chain(self.not_attempted.iter().copied()).collect();
        ids.sort_unstable();
        ids
    }
}

/// Prediction for one example; an unusable completion is still a
/// prediction, with the extraction failure recorded.
pub fn predict_one(
    example: &Example,
    ddl: &str,
    guidelines: &DialectGuidelines,
    completer: &dyn Completer,
) -> Result<Prediction, ChatError> {
    let prompt = build_prompt(example, ddl, guidelines);
    let completion = completer.complete(&prompt)?;
    let (sql, extraction_error) = match extract_sql(&completion.text) {
        Ok(sql) => (sql, None),
        Err(e) => (String::new(), Some(e.to_string())),
    };
    Ok(Prediction {
        example_id: example.id,
        model_id: completer.model_id().to_string(),
        dialect: guidelines.dialect.clone(),
        sql,
        raw_completion: completion.text,
        latency_ms: completion.latency_ms,
        extraction_error,
    })
}

/// Request predictions for every example not in `done`, appending each
/// to `log` as it arrives.
pub fn generate_predictions(
    req: &GenerateRequest<'_>,
    completer: &dyn Completer,
    log: &JsonlLog<Prediction>,
    done: &BTreeSet<i64>,
) -> Result<GenerateSummary> {
    if req.guidelines.dialect != *req.dialect {
        return Err(HarnessError::Config(format!(
            "guidelines are for {} but the target is {}",
            req.guidelines.dialect, req.dialect
        )));
    }
    let todo: Vec<&Example> = req.benchmark.examples.iter().filter(|e| !done.contains(&e.id)).collect();
    if let Some(e) = todo.iter().find(|e| !req.ddl.contains_key(&e.db_id)) {
        return Err(HarnessError::Config(format!("no schema available for database '{}'", e.db_id)));
    }
    let mut summary = GenerateSummary { skipped: req.benchmark.examples.len() - todo.len(), ..Default::default() };

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let shared = Mutex::new((0usize, BTreeMap::new(), None::<String>, BTreeSet::new()));
    let io_error = Mutex::new(None::<HarnessError>);
    std::thread::scope(|s| {
        for _ in 0..req.parallelism.clamp(1, todo.len().max(1)) {
            s.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(example) = todo.get(i) else { break };
                let ddl = &req.ddl[&example.db_id];
                let outcome = predict_one(example, ddl, req.guidelines, completer);
                let mut st = shared.lock().unwrap_or_else(|p| p.into_inner());
                st.3.insert(example.id);
                match outcome {
                    Ok(p) => match log.append(&p) {
                        Ok(()) => st.0 += 1,
                        Err(e) => {
                            stop.store(true, Ordering::SeqCst);
                            *io_error.lock().unwrap_or_else(|p| p.into_inner()) = Some(e);
                        }
                    },
                    Err(ChatError::Auth(m)) => {
                        stop.store(true, Ordering::SeqCst);
                        st.1.insert(example.id, m.clone());
                        st.2.get_or_insert(m);
                    }
                    Err(e) => {
                        tracing::warn!(example = example.id, error = %e, "no prediction");
                        st.1.insert(example.id, e.to_string());
                    }
                }
            });
        }
    });
    if let Some(e) = io_error.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(e);
    }
    let (written, failures, aborted, attempted) = shared.into_inner().unwrap_or_else(|p| p.into_inner());
    summary.written = written;
    summary.failures = failures;
    summary.aborted = aborted;
    summary.not_attempted = todo.iter().map(|e| e.id).filter(|id| !attempted.contains(id)).collect();
    Ok(summary)
}
