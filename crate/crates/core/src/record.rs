//! Predictions, execution outcomes, verdicts and the per-run manifest.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dialect::Dialect;
use crate::error::{CoreError, Result};
use crate::value::ResultSet;

/// One model output for one example in one target dialect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub example_id: i64,
    pub model_id: String,
    pub dialect: Dialect,
    /// Extracted query; empty when extraction failed.
    pub sql: String,
    /// Untouched model output.
    pub raw_completion: String,
    pub latency_ms: f64,
    /// Why no query could be extracted, if so.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Syntax,
    Semantic,
    Constraint,
    Connection,
    Other,
}

impl ErrorKind {
    /// Best-effort classification of a driver message. Engines share no
    /// error taxonomy, so this only feeds diagnostics, never verdicts.
    pub fn classify_message(message: &str) -> ErrorKind {
        let m = message.to_lowercase();
        let has = |needle: &str| m.contains(needle);
        if has("syntax") || has("parse error") || has("unrecognized token") || has("incomplete input")
        {
            return ErrorKind::Syntax;
        }
        if has("no such function")
            || has("unknown function")
            || (has("function") && has("does not exist"))
            || (has("function") && has("not found"))
        {
            return ErrorKind::Syntax;
        }
        if has("no such column")
            || has("no such table")
            || has("unknown column")
            || has("unknown table")
            || has("does not exist")
            || has("doesn't exist")
            || has("ambiguous")
            || has("must appear in the group by")
            || has("misuse of aggregate")
            || has("mismatch")
            || has("cannot be cast")
            || has("invalid input syntax")
        {
            return ErrorKind::Semantic;
        }
        if has("constraint") || has("violates") || has("duplicate key") {
            return ErrorKind::Constraint;
        }
        if has("connection") || has("connect") || has("unable to open") || has("broken pipe") {
            return ErrorKind::Connection;
        }
        ErrorKind::Other
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Syntax => "syntax",
            ErrorKind::Semantic => "semantic",
            ErrorKind::Constraint => "constraint",
            ErrorKind::Connection => "connection",
            ErrorKind::Other => "other",
        })
    }
}

/// Result of running one statement. Failures are values, never panics or
/// errors escaping the adapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExecutionOutcome {
    Ok { result: ResultSet, elapsed_ms: f64 },
    EngineError { kind: ErrorKind, message: String },
    Timeout { limit_ms: u64 },
}

impl ExecutionOutcome {
    pub fn error(kind: ErrorKind, message: impl Into<String>) -> Self {
        ExecutionOutcome::EngineError { kind, message: message.into() }
    }

    pub fn result(&self) -> Option<&ResultSet> {
        match self {
            ExecutionOutcome::Ok { result, .. } => Some(result),
            _ => None,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, ExecutionOutcome::Ok { .. })
    }

    pub fn summary(&self) -> OutcomeSummary {
        match self {
            ExecutionOutcome::Ok { result, elapsed_ms } => OutcomeSummary {
                status: OutcomeStatus::Ok,
                row_count: Some(result.row_count() as u64),
                columns: Some(result.columns().to_vec()),
                elapsed_ms: Some(*elapsed_ms),
                error_kind: None,
                message: None,
                limit_ms: None,
            },
            ExecutionOutcome::EngineError { kind, message } => OutcomeSummary {
                status: OutcomeStatus::Error,
                row_count: None,
                columns: None,
                elapsed_ms: None,
                error_kind: Some(*kind),
                message: Some(message.clone()),
                limit_ms: None,
            },
            ExecutionOutcome::Timeout { limit_ms } => OutcomeSummary {
                status: OutcomeStatus::Timeout,
                row_count: None,
                columns: None,
                elapsed_ms: None,
                error_kind: None,
                message: None,
                limit_ms: Some(*limit_ms),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Ok,
    Error,
    Timeout,
    /// The statement was never run (for example no query could be extracted).
    Skipped,
}

/// Persistable digest of an [`ExecutionOutcome`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub status: OutcomeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<ErrorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_ms: Option<u64>,
}

impl OutcomeSummary {
    pub fn skipped(message: impl Into<String>) -> Self {
        OutcomeSummary {
            status: OutcomeStatus::Skipped,
            row_count: None,
            columns: None,
            elapsed_ms: None,
            error_kind: None,
            message: Some(message.into()),
            limit_ms: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncorrectReason {
    ResultMismatch,
    PredError,
    PredTimeout,
}

/// Binary correctness of one prediction, or a benchmark defect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect { reason: IncorrectReason },
    /// The gold query itself failed; this measures the benchmark, not the model.
    GoldFailure { message: String },
}

impl Verdict {
    pub fn is_correct(&self) -> bool {
        matches!(self, Verdict::Correct)
    }

    pub fn is_gold_failure(&self) -> bool {
        matches!(self, Verdict::GoldFailure { .. })
    }
}

/// One (model, example, dialect) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub run_id: String,
    pub example_id: i64,
    pub model_id: String,
    pub dialect: Dialect,
    pub pred_sql: String,
    pub gold: OutcomeSummary,
    pub pred: OutcomeSummary,
    #[serde(flatten)]
    pub verdict: Verdict,
    /// Comparator explanation when the results differ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl EvalRecord {
    pub fn key(&self) -> (String, i64, Dialect) {
        (self.model_id.clone(), self.example_id, self.dialect.clone())
    }
}

/// Model endpoint as recorded in a manifest: no secrets, only the name of
/// the environment variable that holds them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointSummary {
    pub model_id: String,
    pub base_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
}

/// Frozen configuration of a run. Written once, never rewritten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub benchmark_name: String,
    pub benchmark_sha256: String,
    pub benchmark_path: String,
    pub benchmark_format: crate::benchmark::BenchmarkFormat,
    pub db_root: String,
    pub dialects: Vec<Dialect>,
    pub endpoints: Vec<EndpointSummary>,
    pub rtol: f64,
    pub atol: f64,
    pub timeout_ms: u64,
    pub parallelism: usize,
    pub created_at: String,
}

impl RunManifest {
    /// Write to `path`, refusing to overwrite an existing manifest.
    pub fn write_new(&self, path: &Path) -> Result<()> {
        let mut file = match std::fs::OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(CoreError::ManifestExists(self.run_id.clone()))
            }
            Err(e) => return Err(e.into()),
        };
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
