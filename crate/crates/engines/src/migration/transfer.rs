//! Bulk copy of source rows into an already created target schema.

use std::collections::BTreeMap;

use xdialect_core::{Cell, Dialect, SchemaSnapshot};

use super::introspect::SourceDb;
use super::MigrationError;
use crate::adapters::Loader;

/// Copy every row of every table, `batch_size` rows per insert and one
/// transaction per table. Returns rows loaded per (source) table name.
pub fn transfer_data(
    source: &SourceDb,
    target: &mut dyn Loader,
    snapshot: &SchemaSnapshot,
    dialect: &Dialect,
    batch_size: usize,
) -> Result<BTreeMap<String, u64>, MigrationError> {
    let batch_size = batch_size.max(1);
    let folded = snapshot.folded_for(dialect);
    let mut loaded = BTreeMap::new();
    for (table, target_table) in snapshot.tables.iter().zip(&folded.tables) {
        target.begin()?;
        let mut batch: Vec<Vec<Cell>> = Vec::with_capacity(batch_size.min(table.row_count as usize + 1));
        let mut offset = 0u64;
        let mut failure = None;
        let scanned = source.scan(table, &mut |row| {
            if failure.is_some() {
                return;
            }
            batch.push(row.to_vec());
            if batch.len() == batch_size {
                match target.load_batch(target_table, &batch) {
                    Ok(()) => offset += batch.len() as u64,
                    Err(e) => failure = Some(e),
                }
                batch.clear();
            }
        });
        let result = scanned.and_then(|_| match failure.take() {
            Some(e) => Err(e.into()),
            None if batch.is_empty() => Ok(()),
            None => target.load_batch(target_table, &batch).map_err(Into::into).map(|_| offset += batch.len() as u64),
        });
        if let Err(e) = result {
            let _ = target.rollback();
            return Err(MigrationError::Transfer { table: table.name.clone(), offset, message: e.to_string() });
        }
        target.commit()?;
        loaded.insert(table.name.clone(), offset);
    }
    Ok(loaded)
}
