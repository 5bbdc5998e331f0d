//! Logical kind to target column type, per dialect.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use xdialect_core::{Dialect, TypeKind};

use super::MigrationError;

/// Target type templates keyed by dialect id, then by kind name. Decimal
/// templates may use `{p}` and `{s}` for precision and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMappingTable {
    types: BTreeMap<String, BTreeMap<String, String>>,
    /// Kinds a text column may be promoted to, tried in order.
    #[serde(default = "default_promotions")]
    promotions: Vec<String>,
}

fn default_promotions() -> Vec<String> {
    vec!["date".into(), "timestamp".into()]
}

const BUILTIN: &[(&str, [&str; 8])] = &[
    // integer, float, decimal, text, boolean, date, timestamp, bytes
    ("postgres", ["BIGINT", "DOUBLE PRECISION", "NUMERIC({p},{s})", "TEXT", "BOOLEAN", "DATE", "TIMESTAMP", "BYTEA"]),
    ("mysql", ["BIGINT", "DOUBLE", "DECIMAL({p},{s})", "LONGTEXT", "BOOLEAN", "DATE", "DATETIME(6)", "LONGBLOB"]),
    (
        "clickhouse",
        ["Int64", "Float64", "Decimal({p},{s})", "String", "Bool", "Date32", "DateTime64(6, 'UTC')", "String"],
    ),
    ("snowflake", ["NUMBER(38,0)", "FLOAT", "NUMBER({p},{s})", "VARCHAR", "BOOLEAN", "DATE", "TIMESTAMP_NTZ", "BINARY"]),
    ("bigquery", ["INT64", "FLOAT64", "BIGNUMERIC({p},{s})", "STRING", "BOOL", "DATE", "DATETIME", "BYTES"]),
    ("sqlite", ["INTEGER", "REAL", "DECIMAL({p},{s})", "TEXT", "BOOLEAN", "DATE", "TIMESTAMP", "BLOB"]),
    ("quirk", ["INTEGER", "REAL", "DECIMAL({p},{s})", "TEXT", "BOOLEAN", "DATE", "TIMESTAMP", "BLOB"]),
];

impl Default for TypeMappingTable {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TypeMappingTable {
    pub fn builtin() -> Self {
        let types = BUILTIN
            .iter()
            .map(|(dialect, names)| {
                let row = TypeKind::ALL_NAMES.iter().zip(names).map(|(k, v)| (k.to_string(), v.to_string())).collect();
                (dialect.to_string(), row)
            })
            .collect();
        TypeMappingTable { types, promotions: default_promotions() }
    }

    /// Parse and validate a JSON table. Any gap is reported here, before a
    /// migration starts.
    pub fn from_json(bytes: &[u8]) -> Result<Self, MigrationError> {
        let table: TypeMappingTable =
            serde_json::from_slice(bytes).map_err(|e| MigrationError::Mapping(format!("unreadable type mapping: {e}")))?;
        table.validate()?;
        Ok(table)
    }

    /// Add or replace one dialect's row, validating it.
    pub fn with_dialect(mut self, dialect: &Dialect, row: BTreeMap<String, String>) -> Result<Self, MigrationError> {
        self.types.insert(dialect.id().to_string(), row);
        self.validate()?;
        Ok(self)
    }

    pub fn dialects(&self) -> impl Iterator<Item = &str> {
        self.types.keys().map(String::as_str)
    }

    pub fn covers(&self, dialect: &Dialect) -> bool {
        self.types.contains_key(dialect.id())
    }

    pub fn promotions(&self) -> Vec<TypeKind> {
        self.promotions
            .iter()
            .filter_map(|p| match p.as_str() {
                "date" => Some(TypeKind::Date),
                "timestamp" => Some(TypeKind::Timestamp),
                _ => None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), MigrationError> {
        for (dialect, row) in &self.types {
            for kind in TypeKind::ALL_NAMES {
                match row.get(kind) {
                    Some(t) if !t.trim().is_empty() => {}
                    _ => return Err(MigrationError::Unmapped { kind: kind.to_string(), dialect: dialect.clone() }),
                }
            }
            if let Some(extra) = row.keys().find(|k| !TypeKind::ALL_NAMES.contains(&k.as_str())) {
                return Err(MigrationError::Mapping(format!("unknown kind '{extra}' in the {dialect} mapping")));
            }
        }
        if let Some(bad) = self.promotions.iter().find(|p| !matches!(p.as_str(), "date" | "timestamp")) {
            return Err(MigrationError::Mapping(format!("text cannot be promoted to '{bad}'")));
        }
        Ok(())
    }

    pub fn target_type(&self, dialect: &Dialect, kind: &TypeKind) -> Result<String, MigrationError> {
        let unmapped = || MigrationError::Unmapped { kind: kind.name().to_string(), dialect: dialect.id().to_string() };
        let template = self.types.get(dialect.id()).and_then(|row| row.get(kind.name())).ok_or_else(unmapped)?;
        Ok(match kind {
            TypeKind::Decimal { precision, scale } => {
                template.replace("{p}", &precision.to_string()).replace("{s}", &scale.to_string())
            }
            _ => template.clone(),
        })
    }
}
