//! Engine-neutral data model and pure evaluation logic for cross-dialect
//! text-to-SQL benchmarking.

pub mod benchmark;
pub mod comparator;
pub mod dialect;
pub mod error;
pub mod gapscope;
pub mod metrics;
pub mod record;
pub mod schema;
pub mod sqltext;
pub mod value;

pub use benchmark::{BenchmarkFormat, BenchmarkSpec, Example};
pub use comparator::{compare, ComparatorConfig, Comparison};
pub use dialect::Dialect;
pub use error::{CoreError, Result};
pub use record::{
    ErrorKind, EvalRecord, ExecutionOutcome, IncorrectReason, OutcomeSummary, Prediction,
    RunManifest, Verdict,
};
pub use schema::{ColumnSchema, ForeignKey, LogicalType, SchemaSnapshot, TableSchema, TypeKind};
pub use value::{Cell, Decimal, ResultSet};
