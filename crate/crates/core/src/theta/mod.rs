//! Building blocks of a Theta service: broker, immutable store, serving view,
//! processor chains and the service bootstrap.

mod broker;
mod chain;
mod service;
mod store;
mod view;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

pub use broker::{Broker, BrokerError, Envelope, GroupStats, MessageId};
pub use chain::{ChainError, OutputProcessor, PreProcessor, TypedSource, TypedStream};
pub use service::{
    run_app_service, AppServiceConfig, Binding, ServiceError, ServiceHandle, ServiceKind,
};
pub use store::{ImmutableRecord, ImmutableStore, MemoryStore, StoreError};
pub use view::{Columns, ServingView, ViewRow};

use crate::stream::{DurableStorage, MemoryStorage};
use crate::value::Value;

/// Output sink keyed by `(name, batch_id)`. A batch written twice keeps its
/// first contents, which is how replayed batches stay exactly-once.
#[derive(Debug, Default, Clone)]
pub struct BatchSink {
    batches: BTreeMap<(String, u64), Vec<Value>>,
    rejected: u64,
}

impl BatchSink {
    pub fn new() -> Self {
        BatchSink::default()
    }

    /// Returns false if the batch was already written.
    pub fn write(&mut self, name: &str, batch_id: u64, items: Vec<Value>) -> bool {
        let key = (name.to_string(), batch_id);
        if self.batches.contains_key(&key) {
            self.rejected += 1;
            return false;
        }
        self.batches.insert(key, items);
        true
    }

    pub fn batch(&self, name: &str, batch_id: u64) -> Option<&[Value]> {
        self.batches
            .get(&(name.to_string(), batch_id))
            .map(|v| v.as_slice())
    }

    /// All items of one sink in batch order.
    pub fn items<'a>(&'a self, name: &'a str) -> impl Iterator<Item = (u64, &'a Value)> + 'a {
        self.batches
            .iter()
            .filter(move |((n, _), _)| n == name)
            .flat_map(|((_, b), items)| items.iter().map(move |v| (*b, v)))
    }

    pub fn batch_ids(&self, name: &str) -> Vec<u64> {
        self.batches
            .keys()
            .filter(|(n, _)| n == name)
            .map(|(_, b)| *b)
            .collect()
    }

    /// Repeated writes that were ignored.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }
}

/// Everything that outlives a driver: the broker, the stores and the
/// durable WAL/checkpoint storage.
pub struct Services {
    pub broker: Broker,
    pub store: Box<dyn ImmutableStore>,
    pub view: ServingView,
    pub sink: BatchSink,
    pub durable: Box<dyn DurableStorage>,
}

impl Default for Services {
    fn default() -> Self {
        Services {
            broker: Broker::default(),
            store: Box::new(MemoryStore::new()),
            view: ServingView::new(),
            sink: BatchSink::new(),
            durable: Box::new(MemoryStorage::new()),
        }
    }
}

impl Services {
    pub fn new() -> Self {
        Services::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sink_keeps_first_write() {
        let mut s = BatchSink::new();
        assert!(s.write("out", 1, vec![Value::Int(1)]));
        assert!(!s.write("out", 1, vec![Value::Int(2)]));
        assert!(s.write("out", 2, vec![Value::Int(3)]));
        let items: Vec<i64> = s.items("out").map(|(_, v)| v.as_int().unwrap()).collect();
        assert_eq!(items, vec![1, 3]);
        assert_eq!(s.rejected(), 1);
        assert_eq!(s.batch_ids("out"), vec![1, 2]);
    }
}
