use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use super::TaskContext;
use crate::value::Value;

pub type MapFn = Arc<dyn Fn(&mut TaskContext<'_>, &Value) -> Value + Send + Sync>;
pub type FilterFn = Arc<dyn Fn(&mut TaskContext<'_>, &Value) -> bool + Send + Sync>;
pub type FlatMapFn = Arc<dyn Fn(&mut TaskContext<'_>, &Value) -> Vec<Value> + Send + Sync>;
pub type ForeachFn = Arc<dyn Fn(&mut TaskContext<'_>, &Value) + Send + Sync>;
/// Commutative, associative merge used by reduce-by-key and accumulators.
pub type ReduceFn = Arc<dyn Fn(&Value, &Value) -> Value + Send + Sync>;
pub type StateFn = Arc<dyn Fn(&mut TaskContext<'_>, StateCall<'_>) -> StateOutcome + Send + Sync>;
pub type PartitionFn = Arc<dyn Fn(&Value, usize) -> usize + Send + Sync>;

/// The operation a dataset was derived with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Source,
    Map,
    Filter,
    FlatMap,
    Union,
    ReduceByKey,
    GroupByKey,
    Join,
    KeyedState,
}

impl OpKind {
    pub fn dependency(self) -> Option<DependencyKind> {
        match self {
            OpKind::Source => None,
            OpKind::Map | OpKind::Filter | OpKind::FlatMap | OpKind::Union => {
                Some(DependencyKind::Narrow)
            }
            OpKind::ReduceByKey | OpKind::GroupByKey | OpKind::Join | OpKind::KeyedState => {
                Some(DependencyKind::Wide)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DependencyKind {
    /// Each parent partition feeds at most one child partition.
    Narrow,
    /// Child partitions read from many parent partitions; needs a shuffle.
    Wide,
}

#[derive(Clone)]
pub(crate) enum Op {
    Map(MapFn),
    Filter(FilterFn),
    FlatMap(FlatMapFn),
    Union,
    ReduceByKey(ReduceFn),
    GroupByKey,
    Join,
    KeyedState(Arc<StateOp>),
}

impl Op {
    pub(crate) fn kind(&self) -> OpKind {
        match self {
            Op::Map(_) => OpKind::Map,
            Op::Filter(_) => OpKind::Filter,
            Op::FlatMap(_) => OpKind::FlatMap,
            Op::Union => OpKind::Union,
            Op::ReduceByKey(_) => OpKind::ReduceByKey,
            Op::GroupByKey => OpKind::GroupByKey,
            Op::Join => OpKind::Join,
            Op::KeyedState(_) => OpKind::KeyedState,
        }
    }
}

/// Routes keys to output partitions of a wide operation.
#[derive(Clone)]
pub struct Partitioner {
    partitions: usize,
    custom: Option<PartitionFn>,
}

impl Partitioner {
    /// `stable_hash(key) mod partitions`.
    pub fn hash(partitions: usize) -> Self {
        Partitioner {
            partitions: partitions.max(1),
            custom: None,
        }
    }

    pub fn custom(partitions: usize, f: PartitionFn) -> Self {
        Partitioner {
            partitions: partitions.max(1),
            custom: Some(f),
        }
    }

    pub fn partitions(&self) -> usize {
        self.partitions
    }

    /// `None` when the key cannot be hashed.
    pub fn partition_of(&self, key: &Value) -> Option<usize> {
        match &self.custom {
            Some(f) => Some(f(key, self.partitions) % self.partitions),
            None if key.is_keyable() => Some((key.stable_hash() % self.partitions as u64) as usize),
            None => None,
        }
    }
}

impl fmt::Debug for Partitioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.custom.is_some() {
            "custom"
        } else {
            "hash"
        };
        write!(f, "Partitioner({kind}, {})", self.partitions)
    }
}

/// State kept for one key.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEntry {
    pub state: Value,
    pub last_update_ms: u64,
}

pub type StatePartition = BTreeMap<Value, StateEntry>;

/// Arguments of one keyed-state update.
pub struct StateCall<'a> {
    pub key: &'a Value,
    /// New values for the key in this interval, in arrival order.
    pub values: &'a [Value],
    pub state: Option<&'a Value>,
    pub batch_time_ms: u64,
}

/// Result of one keyed-state update. `state: None` removes the key.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateOutcome {
    pub state: Option<Value>,
    pub emit: Vec<Value>,
}

impl StateOutcome {
    pub fn keep(state: Value) -> Self {
        StateOutcome {
            state: Some(state),
            emit: Vec::new(),
        }
    }

    pub fn remove() -> Self {
        StateOutcome::default()
    }
}

/// Keyed-state operator description. The previous state snapshot is part of
/// the descriptor, so a partition can be recomputed from lineage.
pub struct StateOp {
    pub prev: Arc<Vec<Arc<StatePartition>>>,
    pub update: StateFn,
    pub batch_time_ms: u64,
    /// Keys without new values whose last update is older than this are
    /// dropped before the update function runs.
    pub ttl_ms: Option<u64>,
}

/// One output element of a keyed-state dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRecord {
    pub key: Value,
    pub entry: Option<StateEntry>,
    pub emit: Vec<Value>,
}
