//! Row counts and order-insensitive column checksums on both sides.

use serde::{Deserialize, Serialize};
use xdialect_core::comparator::canonical_cell_text;
use xdialect_core::{Cell, Dialect, SchemaSnapshot};
use xxhash_rust::xxh3::xxh3_64;

use super::introspect::SourceDb;
use super::MigrationError;
use crate::adapters::Loader;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnChecksum {
    pub name: String,
    /// Hex of the wrapping sum of per-cell hashes.
    pub source: String,
    pub target: String,
}

impl ColumnChecksum {
    pub fn matches(&self) -> bool {
        self.source == self.target
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableReport {
    pub name: String,
    pub target_name: String,
    pub source_rows: u64,
    pub loaded_rows: u64,
    pub target_rows: u64,
    pub columns: Vec<ColumnChecksum>,
    pub count_match: bool,
    pub checksums_match: bool,
}

impl TableReport {
    pub fn verified(&self) -> bool {
        self.count_match && self.checksums_match
    }
}

/// Per-column checksum accumulator: the sum is commutative, so row order
/// on either side does not matter.
#[derive(Debug, Clone, Default)]
pub struct ColumnSums(Vec<u64>);

impl ColumnSums {
    pub fn new(width: usize) -> Self {
        ColumnSums(vec![0; width])
    }

    pub fn add_row(&mut self, row: &[Cell]) {
        for (acc, cell) in self.0.iter_mut().zip(row) {
            *acc = acc.wrapping_add(xxh3_64(canonical_cell_text(cell).as_bytes()));
        }
    }

    pub fn hex(&self) -> Vec<String> {
        self.0.iter().map(|v| format!("{v:016x}")).collect()
    }
}

/// Compare every table of `snapshot` (source names, inferred kinds)
/// against its folded counterpart on the target. `loaded` holds the rows
/// the transfer reported per table; tables it omits count as zero.
pub fn verify_migration(
    source: &SourceDb,
    target: &mut dyn Loader,
    snapshot: &SchemaSnapshot,
    dialect: &Dialect,
    loaded: &std::collections::BTreeMap<String, u64>,
) -> Result<Vec<TableReport>, MigrationError> {
    let folded = snapshot.folded_for(dialect);
    let mut reports = Vec::with_capacity(snapshot.tables.len());
    for (table, target_table) in snapshot.tables.iter().zip(&folded.tables) {
        let width = table.columns.len();
        let mut src = ColumnSums::new(width);
        let source_rows = source.scan(table, &mut |row| src.add_row(row))?;
        let mut tgt = ColumnSums::new(width);
        let target_rows = target.scan_table(target_table, &mut |row| tgt.add_row(row))?;
        let columns: Vec<ColumnChecksum> = table
            .columns
            .iter()
            .zip(src.hex().into_iter().zip(tgt.hex()))
            .map(|(c, (s, t))| ColumnChecksum { name: c.name.clone(), source: s, target: t })
            .collect();
        let loaded_rows = loaded.get(&table.name).copied().unwrap_or(0);
        reports.push(TableReport {
            name: table.name.clone(),
            target_name: target_table.name.clone(),
            source_rows,
            loaded_rows,
            target_rows,
            checksums_match: columns.iter().all(ColumnChecksum::matches),
            count_match: source_rows == target_rows && loaded_rows == source_rows,
            columns,
        });
    }
    Ok(reports)
}
