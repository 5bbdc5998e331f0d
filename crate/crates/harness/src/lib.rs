//! Cross-dialect evaluation runs: migrate, generate, evaluate, classify
//! and report, persisted in a resumable run directory.

pub mod agreement;
pub mod client;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod generate;
pub mod prompt;
pub mod report;
pub mod run;
pub mod transpile;
pub mod workspace;

pub use client::{ChatClient, ChatError, Completer, Completion, HttpJudge, RetryPolicy};
pub use config::{HarnessConfig, ModelEndpoint};
pub use error::{HarnessError, Result};
pub use prompt::{build_prompt, extract_sql, DialectGuidelines, Prompt};
pub use run::RunDir;
pub use workspace::{BenchmarkSource, Workspace};
