//! Dialect-independent schema description.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawTypeKind")]
pub enum TypeKind {
    Integer,
    Float,
    Decimal { precision: u32, scale: u32 },
    Text,
    Boolean,
    Date,
    Timestamp,
    Bytes,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawTypeKind {
    Integer,
    Float,
    Decimal { precision: u32, scale: u32 },
    Text,
    Boolean,
    Date,
    Timestamp,
    Bytes,
}

impl TryFrom<RawTypeKind> for TypeKind {
    type Error = CoreError;

    fn try_from(raw: RawTypeKind) -> Result<Self> {
        Ok(match raw {
            RawTypeKind::Integer => TypeKind::Integer,
            RawTypeKind::Float => TypeKind::Float,
            RawTypeKind::Decimal { precision, scale } => TypeKind::decimal(precision, scale)?,
            RawTypeKind::Text => TypeKind::Text,
            RawTypeKind::Boolean => TypeKind::Boolean,
            RawTypeKind::Date => TypeKind::Date,
            RawTypeKind::Timestamp => TypeKind::Timestamp,
            RawTypeKind::Bytes => TypeKind::Bytes,
        })
    }
}

impl TypeKind {
    /// Precision and scale used when a decimal column declares neither.
    pub const DEFAULT_DECIMAL: TypeKind = TypeKind::Decimal { precision: 38, scale: 10 };

    pub fn decimal(precision: u32, scale: u32) -> Result<Self> {
        if precision < scale || precision == 0 {
            return Err(CoreError::DecimalPrecision { precision, scale });
        }
        Ok(TypeKind::Decimal { precision, scale })
    }

    /// Kind name without parameters, as used in mapping tables.
    pub fn name(&self) -> &'static str {
        match self {
            TypeKind::Integer => "integer",
            TypeKind::Float => "float",
            TypeKind::Decimal { .. } => "decimal",
            TypeKind::Text => "text",
            TypeKind::Boolean => "boolean",
            TypeKind::Date => "date",
            TypeKind::Timestamp => "timestamp",
            TypeKind::Bytes => "bytes",
        }
    }

    pub const ALL_NAMES: [&'static str; 8] =
        ["integer", "float", "decimal", "text", "boolean", "date", "timestamp", "bytes"];
}

impl fmt::Display for TypeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeKind::Decimal { precision, scale } => write!(f, "decimal({precision},{scale})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogicalType {
    #[serde(flatten)]
    pub kind: TypeKind,
    pub nullable: bool,
}

impl LogicalType {
    pub fn new(kind: TypeKind, nullable: bool) -> Self {
        LogicalType { kind, nullable }
    }

    pub fn nullable(kind: TypeKind) -> Self {
        LogicalType { kind, nullable: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: LogicalType,
    /// Type as declared in the source catalog, verbatim.
    #[serde(default)]
    pub declared: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub columns: Vec<String>,
    pub referenced_table: String,
    pub referenced_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnSchema>,
    #[serde(default)]
    pub primary_key: Option<Vec<String>>,
    /// Descriptive only. Nothing downstream enforces these.
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
    pub row_count: u64,
}

impl TableSchema {
    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// Snapshot of one database's user tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemaSnapshot {
    pub tables: Vec<TableSchema>,
}

impl SchemaSnapshot {
    pub fn table(&self, name: &str) -> Option<&TableSchema> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn total_rows(&self) -> u64 {
        self.tables.iter().map(|t| t.row_count).sum()
    }

    /// Columns whose kind differs between `self` and `other`, as `table.column`.
    pub fn kind_changes(&self, other: &SchemaSnapshot) -> Vec<String> {
        let mut out = Vec::new();
        for t in &self.tables {
            let Some(o) = other.table(&t.name) else { continue };
            for c in &t.columns {
                if let Some(oc) = o.column(&c.name) {
                    if oc.ty.kind != c.ty.kind {
                        out.push(format!("{}.{}", t.name, c.name));
                    }
                }
            }
        }
        out
    }

    /// Names as the target engine will store them. Case-insensitive
    /// uniqueness in the source guarantees the folded names stay unique.
    pub fn folded_for(&self, dialect: &crate::Dialect) -> SchemaSnapshot {
        let fold = |s: &String| dialect.fold_identifier(s);
        SchemaSnapshot {
            tables: self
                .tables
                .iter()
                .map(|t| TableSchema {
                    name: fold(&t.name),
                    columns: t
                        .columns
                        .iter()
                        .map(|c| ColumnSchema { name: fold(&c.name), ..c.clone() })
                        .collect(),
                    primary_key: t.primary_key.as_ref().map(|pk| pk.iter().map(fold).collect()),
                    foreign_keys: t
                        .foreign_keys
                        .iter()
                        .map(|fk| ForeignKey {
                            columns: fk.columns.iter().map(fold).collect(),
                            referenced_table: fold(&fk.referenced_table),
                            referenced_columns: fk.referenced_columns.iter().map(fold).collect(),
                        })
                        .collect(),
                    row_count: t.row_count,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Dialect;

    #[test]
    fn decimal_precision_invariant() {
        assert!(TypeKind::decimal(10, 2).is_ok());
        assert!(TypeKind::decimal(2, 2).is_ok());
        assert!(TypeKind::decimal(2, 3).is_err());
        let bad = r#"{"kind":"decimal","precision":1,"scale":4,"nullable":true}"#;
        assert!(serde_json::from_str::<LogicalType>(bad).is_err());
    }

    #[test]
    fn logical_type_json_shape() {
        let t = LogicalType::nullable(TypeKind::decimal(12, 3).unwrap());
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"kind":"decimal","precision":12,"scale":3,"nullable":true}"#);
        assert_eq!(serde_json::from_str::<LogicalType>(&json).unwrap(), t);
    }

    #[test]
    fn folding_keeps_structure() {
        let snap = SchemaSnapshot {
            tables: vec![TableSchema {
                name: "Child".into(),
                columns: vec![ColumnSchema {
                    name: "ParentId".into(),
                    ty: LogicalType::nullable(TypeKind::Integer),
                    declared: "INTEGER".into(),
                }],
                primary_key: None,
                foreign_keys: vec![ForeignKey {
                    columns: vec!["ParentId".into()],
                    referenced_table: "Parent".into(),
                    referenced_columns: vec!["Id".into()],
                }],
                row_count: 4,
            }],
        };
        let pg = snap.folded_for(&Dialect::Postgres);
        assert_eq!(pg.tables[0].name, "child");
        assert_eq!(pg.tables[0].foreign_keys[0].referenced_columns, vec!["id"]);
        assert_eq!(snap.folded_for(&Dialect::Mysql), snap);
        let json = serde_json::to_string(&snap).unwrap();
        assert_eq!(serde_json::from_str::<SchemaSnapshot>(&json).unwrap(), snap);
    }
}
