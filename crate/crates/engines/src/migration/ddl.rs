//! CREATE TABLE scripts for a target dialect.

use serde::{Deserialize, Serialize};
use xdialect_core::{Dialect, SchemaSnapshot, TableSchema};

use super::typemap::TypeMappingTable;
use super::MigrationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DdlMode {
    /// Types only: no keys, NOT NULL or UNIQUE, so dirty rows still load.
    Load,
    /// Same types plus key clauses, for showing the schema to a model.
    Prompt,
}

/// One statement per table, in snapshot order. Names are folded the way
/// the target stores unquoted identifiers, then quoted.
pub fn render_target_ddl(
    snapshot: &SchemaSnapshot,
    dialect: &Dialect,
    mapping: &TypeMappingTable,
    mode: DdlMode,
) -> Result<String, MigrationError> {
    let folded = snapshot.folded_for(dialect);
    let statements: Vec<String> =
        folded.tables.iter().map(|t| render_table(t, dialect, mapping, mode)).collect::<Result<_, _>>()?;
    Ok(statements.join("\n\n"))
}

/// Statements separately, for loaders that take one at a time.
pub fn render_statements(
    snapshot: &SchemaSnapshot,
    dialect: &Dialect,
    mapping: &TypeMappingTable,
    mode: DdlMode,
) -> Result<Vec<String>, MigrationError> {
    snapshot.folded_for(dialect).tables.iter().map(|t| render_table(t, dialect, mapping, mode)).collect()
}

fn render_table(
    table: &TableSchema,
    dialect: &Dialect,
    mapping: &TypeMappingTable,
    mode: DdlMode,
) -> Result<String, MigrationError> {
    let q = |s: &str| dialect.quote_identifier(s);
    let list = |names: &[String]| names.iter().map(|n| q(n)).collect::<Vec<_>>().join(", ");
    let clickhouse = *dialect == Dialect::Clickhouse;
    let mut lines = Vec::new();
    for col in &table.columns {
        let ty = mapping.target_type(dialect, &col.ty.kind)?;
        let ty = if clickhouse { format!("Nullable({ty})") } else { ty };
        lines.push(format!("  {} {ty}", q(&col.name)));
    }
    let mut notes = Vec::new();
    if mode == DdlMode::Prompt {
        let mut keys = Vec::new();
        if let Some(pk) = &table.primary_key {
            keys.push(format!("PRIMARY KEY ({})", list(pk)));
        }
        for fk in &table.foreign_keys {
            keys.push(format!(
                "FOREIGN KEY ({}) REFERENCES {} ({})",
                list(&fk.columns),
                q(&fk.referenced_table),
                list(&fk.referenced_columns)
            ));
        }
        // ClickHouse has no such constraints; keep them readable as comments.
        if clickhouse {
            notes = keys.into_iter().map(|k| format!("-- {k}")).collect();
        } else {
            lines.extend(keys.into_iter().map(|k| format!("  {k}")));
        }
    }
    let mut out = String::new();
    for n in notes {
        out.push_str(&n);
        out.push('\n');
    }
    out.push_str(&format!("CREATE TABLE {} (\n{}\n)", q(&table.name), lines.join(",\n")));
    if clickhouse {
        out.push_str(" ENGINE = MergeTree ORDER BY tuple()");
    }
    out.push(';');
    Ok(out)
}
