//! Executing one example's gold and predicted queries and judging them.

use xdialect_core::comparator::verdict_from_outcomes;
use xdialect_core::{ComparatorConfig, ErrorKind, EvalRecord, Example, ExecutionOutcome, Prediction};

use crate::adapters::Engine;
use crate::error::Result;

/// Where and how one example runs.
pub struct EvalContext<'a> {
    pub run_id: &'a str,
    /// Source engine holding the example's database.
    pub source: &'a dyn Engine,
    pub target: &'a dyn Engine,
    /// Target namespace the database was migrated into.
    pub namespace: &'a str,
    pub timeout_ms: u64,
    pub comparator: &'a ComparatorConfig,
}

/// Gold query on the source engine. Only a failure to obtain a connection
/// is an error; query failures are outcomes.
pub fn execute_gold(example: &Example, source: &dyn Engine, timeout_ms: u64) -> Result<ExecutionOutcome> {
    Ok(source.session(None)?.execute(&example.gold_sql, timeout_ms))
}

/// Predicted query on the target, or the extraction failure as an outcome.
pub fn execute_prediction(
    prediction: &Prediction,
    target: &dyn Engine,
    namespace: &str,
    timeout_ms: u64,
) -> Result<ExecutionOutcome> {
    if let Some(why) = &prediction.extraction_error {
        return Ok(ExecutionOutcome::error(ErrorKind::Other, format!("no query extracted: {why}")));
    }
    Ok(target.session(Some(namespace))?.execute(&prediction.sql, timeout_ms))
}

/// Verdict for a prediction given an already computed gold outcome.
pub fn judge(example: &Example, prediction: &Prediction, gold: &ExecutionOutcome, pred: &ExecutionOutcome, ctx: &EvalContext<'_>) -> EvalRecord {
    let j = verdict_from_outcomes(gold, pred, &example.gold_sql, ctx.comparator);
    EvalRecord {
        run_id: ctx.run_id.to_string(),
        example_id: example.id,
        model_id: prediction.model_id.clone(),
        dialect: prediction.dialect.clone(),
        pred_sql: prediction.sql.clone(),
        gold: gold.summary(),
        pred: pred.summary(),
        verdict: j.verdict,
        detail: j.detail,
    }
}

/// Run gold on the source and the prediction on the target concurrently,
/// then compare.
pub fn evaluate_example(example: &Example, prediction: &Prediction, ctx: &EvalContext<'_>) -> Result<EvalRecord> {
    let (gold, pred) = std::thread::scope(|s| {
        let gold = s.spawn(|| execute_gold(example, ctx.source, ctx.timeout_ms));
        let pred = execute_prediction(prediction, ctx.target, ctx.namespace, ctx.timeout_ms);
        (gold.join().unwrap_or_else(|p| std::panic::resume_unwind(p)), pred)
    });
    Ok(judge(example, prediction, &gold?, &pred?, ctx))
}
