use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{AccumulatorHandle, BroadcastHandle, EngineError, WorkerId};
use crate::value::Value;

/// What an element function sees while it runs inside a task.
///
/// Broadcast values are read-only; accumulators are write-only.
pub struct TaskContext<'a> {
    broadcasts: &'a BTreeMap<u64, Arc<Value>>,
    worker: WorkerId,
    partition: usize,
    time_ms: u64,
    pub(crate) fetched: BTreeSet<u64>,
    pub(crate) partials: Vec<(u64, Value)>,
    pub(crate) work: u64,
}

impl<'a> TaskContext<'a> {
    pub(crate) fn new(
        broadcasts: &'a BTreeMap<u64, Arc<Value>>,
        worker: WorkerId,
        partition: usize,
        time_ms: u64,
    ) -> Self {
        TaskContext {
            broadcasts,
            worker,
            partition,
            time_ms,
            fetched: BTreeSet::new(),
            partials: Vec::new(),
            work: 0,
        }
    }

    pub fn broadcast(&mut self, handle: &BroadcastHandle) -> Option<&'a Value> {
        let v = self.broadcasts.get(&handle.0)?;
        self.fetched.insert(handle.0);
        Some(v.as_ref())
    }

    pub fn add(&mut self, acc: &AccumulatorHandle, delta: Value) {
        self.partials.push((acc.0, delta));
    }

    /// Always fails: only the driver may read accumulator totals.
    pub fn accumulator_value(&self, _acc: &AccumulatorHandle) -> Result<Value, EngineError> {
        Err(EngineError::WorkerReadForbidden)
    }

    /// Reports extra work units (index probes, state entries touched) to the
    /// cost model.
    pub fn add_work(&mut self, units: u64) {
        self.work += units;
    }

    pub fn worker(&self) -> WorkerId {
        self.worker
    }

    pub fn partition(&self) -> usize {
        self.partition
    }

    /// Logical time of the job, e.g. the batch time of a micro-batch.
    pub fn time_ms(&self) -> u64 {
        self.time_ms
    }
}
