use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

/// One appended record. Records are never updated or deleted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImmutableRecord {
    pub collection: Arc<str>,
    /// Gapless per collection, starting at 0.
    pub seq: u64,
    pub payload: Arc<[u8]>,
    pub append_ts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    Io(String),
}

/// Append-only raw data store. There is deliberately no update or delete.
pub trait ImmutableStore: Send {
    fn append(&mut self, collection: &str, payload: &[u8], now: u64) -> Result<u64, StoreError>;

    /// Records matching `pred`, in sequence order. A collection that was
    /// never written scans as empty.
    fn scan(
        &self,
        collection: &str,
        pred: &dyn Fn(&ImmutableRecord) -> bool,
    ) -> Vec<ImmutableRecord>;

    fn len(&self, collection: &str) -> u64;
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    collections: BTreeMap<String, (Arc<str>, Vec<ImmutableRecord>)>,
}

impl MemoryStore {
    pub fn new() -> Self {
        MemoryStore::default()
    }

    /// Inserts an already-sequenced record; used when loading a durable log.
    pub fn restore(&mut self, record: ImmutableRecord) {
        let (_, recs) = self
            .collections
            .entry(record.collection.to_string())
            .or_insert_with(|| (record.collection.clone(), Vec::new()));
        debug_assert_eq!(record.seq, recs.len() as u64);
        recs.push(record);
    }
}

impl ImmutableStore for MemoryStore {
    fn append(&mut self, collection: &str, payload: &[u8], now: u64) -> Result<u64, StoreError> {
        let (name, recs) = self
            .collections
            .entry(collection.to_string())
            .or_insert_with(|| (Arc::from(collection), Vec::new()));
        let seq = recs.len() as u64;
        recs.push(ImmutableRecord {
            collection: name.clone(),
            seq,
            payload: Arc::from(payload),
            append_ts: now,
        });
        Ok(seq)
    }

    fn scan(
        &self,
        collection: &str,
        pred: &dyn Fn(&ImmutableRecord) -> bool,
    ) -> Vec<ImmutableRecord> {
        self.collections
            .get(collection)
            .map(|(_, recs)| recs.iter().filter(|r| pred(r)).cloned().collect())
            .unwrap_or_default()
    }

    fn len(&self, collection: &str) -> u64 {
        self.collections
            .get(collection)
            .map_or(0, |(_, r)| r.len() as u64)
    }
}
