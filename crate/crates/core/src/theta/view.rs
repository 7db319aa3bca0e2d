use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::value::Value;

pub type Columns = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewRow {
    pub table: String,
    pub key: Value,
    pub columns: Columns,
    pub writer_batch_id: u64,
}

/// Keyed result store written idempotently per batch.
///
/// Later upserts win, except that a repeated `(writer_batch_id, key)` pair is
/// ignored, so re-running a batch leaves the view unchanged.
#[derive(Debug, Default, Clone)]
pub struct ServingView {
    tables: BTreeMap<String, BTreeMap<Value, ViewRow>>,
    applied: BTreeSet<(String, u64, Value)>,
}

impl ServingView {
    pub fn new() -> Self {
        ServingView::default()
    }

    /// Returns whether the upsert was applied.
    pub fn upsert(
        &mut self,
        table: &str,
        key: Value,
        columns: Columns,
        writer_batch_id: u64,
    ) -> bool {
        if !self
            .applied
            .insert((table.to_string(), writer_batch_id, key.clone()))
        {
            return false;
        }
        let row = ViewRow {
            table: table.to_string(),
            key: key.clone(),
            columns,
            writer_batch_id,
        };
        self.tables
            .entry(table.to_string())
            .or_default()
            .insert(key, row);
        true
    }

    pub fn get(&self, table: &str, key: &Value) -> Option<&ViewRow> {
        self.tables.get(table)?.get(key)
    }

    pub fn query(&self, table: &str, pred: impl Fn(&ViewRow) -> bool) -> Vec<&ViewRow> {
        self.tables
            .get(table)
            .map(|t| t.values().filter(|r| pred(r)).collect())
            .unwrap_or_default()
    }

    pub fn len(&self, table: &str) -> usize {
        self.tables.get(table).map_or(0, BTreeMap::len)
    }

    pub fn is_empty(&self) -> bool {
        self.tables.values().all(BTreeMap::is_empty)
    }
}
