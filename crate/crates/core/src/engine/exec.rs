//! Task-side evaluation. Everything here reads the graph immutably; results
//! are merged by the driver once an attempt is accepted.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::context::TaskContext;
use super::ops::{Op, Partitioner, StateCall, StateEntry, StateRecord};
use super::{DatasetId, EngineError, ForeachFn, WorkerId};
use crate::value::Value;

pub(crate) type Partition = Arc<Vec<Value>>;

pub(crate) enum Origin {
    Source(Arc<Vec<Partition>>),
    Transform { op: Op, parents: Vec<DatasetId> },
}

pub(crate) struct Node {
    pub origin: Origin,
    pub partitions: usize,
    /// Output routing of a wide node.
    pub partitioner: Option<Partitioner>,
    pub persisted: bool,
    pub cache: BTreeMap<usize, (Partition, WorkerId)>,
    pub computations: u64,
}

impl Node {
    pub fn parents(&self) -> &[DatasetId] {
        match &self.origin {
            Origin::Source(_) => &[],
            Origin::Transform { parents, .. } => parents,
        }
    }

    pub fn op(&self) -> Option<&Op> {
        match &self.origin {
            Origin::Source(_) => None,
            Origin::Transform { op, .. } => Some(op),
        }
    }

    pub fn is_wide(&self) -> bool {
        matches!(
            self.op(),
            Some(Op::ReduceByKey(_) | Op::GroupByKey | Op::Join | Op::KeyedState(_))
        )
    }
}

pub(crate) struct MapOutput {
    pub worker: WorkerId,
    pub buckets: Arc<Vec<Vec<Value>>>,
}

/// Map-side output of one wide node: `sides[parent][map_partition]`.
pub(crate) struct Shuffle {
    pub sides: Vec<Vec<Option<MapOutput>>>,
}

impl Shuffle {
    pub fn missing(&self, side: usize) -> Vec<usize> {
        self.sides[side]
            .iter()
            .enumerate()
            .filter(|(_, o)| o.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.sides.iter().all(|s| s.iter().all(Option::is_some))
    }
}

#[derive(Default)]
pub(crate) struct Graph {
    pub nodes: BTreeMap<DatasetId, Node>,
    pub shuffles: BTreeMap<DatasetId, Shuffle>,
    pub broadcasts: BTreeMap<u64, Arc<Value>>,
}

impl Graph {
    pub fn node(&self, id: DatasetId) -> Result<&Node, EngineError> {
        self.nodes.get(&id).ok_or(EngineError::UnknownDataset(id))
    }
}

#[derive(Clone)]
pub(crate) enum ResultMode {
    Collect,
    Count,
    Foreach(ForeachFn),
}

#[derive(Clone)]
pub(crate) enum TaskSpec {
    Result {
        ds: DatasetId,
        partition: usize,
        /// Recompute the root partition from lineage even if it is cached.
        bypass_cache: bool,
        mode: ResultMode,
    },
    ShuffleMap {
        wide: DatasetId,
        side: usize,
        partition: usize,
    },
}

pub(crate) enum TaskData {
    Values(Partition),
    Count(u64),
    Unit,
    Buckets(Vec<Vec<Value>>),
}

/// Outcome of one task attempt, opaque to executors.
pub struct TaskResult {
    pub(crate) data: Result<TaskData, EngineError>,
    pub(crate) cached: Vec<(DatasetId, usize, Partition)>,
    pub(crate) computed: Vec<DatasetId>,
    pub(crate) partials: Vec<(u64, Value)>,
    pub(crate) fetched: Vec<u64>,
    pub(crate) work: u64,
    pub(crate) elements: u64,
}

pub(crate) fn run_task(g: &Graph, spec: &TaskSpec, worker: WorkerId, time_ms: u64) -> TaskResult {
    let partition = match spec {
        TaskSpec::Result { partition, .. } | TaskSpec::ShuffleMap { partition, .. } => *partition,
    };
    let mut t = Task {
        g,
        ctx: TaskContext::new(&g.broadcasts, worker, partition, time_ms),
        cached: Vec::new(),
        computed: Vec::new(),
        elements: 0,
    };
    let data = t.run(spec);
    TaskResult {
        data,
        cached: t.cached,
        computed: t.computed,
        partials: core::mem::take(&mut t.ctx.partials),
        fetched: t.ctx.fetched.iter().copied().collect(),
        work: t.ctx.work,
        elements: t.elements,
    }
}

struct Task<'g> {
    g: &'g Graph,
    ctx: TaskContext<'g>,
    cached: Vec<(DatasetId, usize, Partition)>,
    computed: Vec<DatasetId>,
    elements: u64,
}

impl<'g> Task<'g> {
    fn run(&mut self, spec: &TaskSpec) -> Result<TaskData, EngineError> {
        match spec {
            TaskSpec::Result {
                ds,
                partition,
                bypass_cache,
                mode,
            } => {
                let data = self.compute(*ds, *partition, *bypass_cache)?;
                Ok(match mode {
                    ResultMode::Collect => TaskData::Values(data),
                    ResultMode::Count => TaskData::Count(data.len() as u64),
                    ResultMode::Foreach(f) => {
                        for v in data.iter() {
                            f(&mut self.ctx, v);
                        }
                        self.elements += data.len() as u64;
                        TaskData::Unit
                    }
                })
            }
            TaskSpec::ShuffleMap {
                wide,
                side,
                partition,
            } => self
                .map_side(*wide, *side, *partition)
                .map(TaskData::Buckets),
        }
    }

    fn compute(&mut self, id: DatasetId, p: usize, bypass: bool) -> Result<Partition, EngineError> {
        let node = self.g.node(id)?;
        if p >= node.partitions {
            return Err(EngineError::IndexOutOfRange {
                index: p,
                partitions: node.partitions,
            });
        }
        if !bypass {
            if let Some((data, _)) = node.cache.get(&p) {
                self.elements += data.len() as u64;
                return Ok(data.clone());
            }
            if let Some((_, _, data)) = self.cached.iter().find(|(d, q, _)| *d == id && *q == p) {
                return Ok(data.clone());
            }
        }
        let out: Partition = match &node.origin {
            Origin::Source(parts) => parts[p].clone(),
            Origin::Transform { op, parents } => match op {
                Op::Map(f) => {
                    let input = self.compute(parents[0], p, false)?;
                    Arc::new(input.iter().map(|v| f(&mut self.ctx, v)).collect())
                }
                Op::Filter(f) => {
                    let input = self.compute(parents[0], p, false)?;
                    Arc::new(
                        input
                            .iter()
                            .filter(|v| f(&mut self.ctx, v))
                            .cloned()
                            .collect(),
                    )
                }
                Op::FlatMap(f) => {
                    let input = self.compute(parents[0], p, false)?;
                    let mut out = Vec::new();
                    for v in input.iter() {
                        out.extend(f(&mut self.ctx, v));
                    }
                    Arc::new(out)
                }
                Op::Union => {
                    let (parent, q) = union_source(self.g, parents, p)?;
                    self.compute(parent, q, false)?
                }
                _ => Arc::new(self.reduce_side(id, node, p)?),
            },
        };
        self.elements += out.len() as u64;
        self.computed.push(id);
        if node.persisted {
            self.cached.push((id, p, out.clone()));
        }
        Ok(out)
    }

    fn map_side(
        &mut self,
        wide: DatasetId,
        side: usize,
        p: usize,
    ) -> Result<Vec<Vec<Value>>, EngineError> {
        let node = self.g.node(wide)?;
        let parent = node.parents()[side];
        let input = self.compute(parent, p, false)?;
        let partitioner = node
            .partitioner
            .as_ref()
            .ok_or(EngineError::ShuffleMissing(wide))?;
        let n = partitioner.partitions();
        match node.op() {
            // Map-side combine: one pair per key and bucket.
            Some(Op::ReduceByKey(f)) => {
                let mut combined: Vec<BTreeMap<Value, Value>> = vec![BTreeMap::new(); n];
                for v in input.iter() {
                    let (k, val) = split_pair(wide, v)?;
                    let b = bucket(partitioner, wide, k)?;
                    match combined[b].get_mut(k) {
                        Some(acc) => *acc = f(acc, val),
                        None => {
                            combined[b].insert(k.clone(), val.clone());
                        }
                    }
                }
                Ok(combined
                    .into_iter()
                    .map(|m| m.into_iter().map(|(k, v)| Value::pair(k, v)).collect())
                    .collect())
            }
            _ => {
                let mut buckets = vec![Vec::new(); n];
                for v in input.iter() {
                    let (k, _) = split_pair(wide, v)?;
                    buckets[bucket(partitioner, wide, k)?].push(v.clone());
                }
                Ok(buckets)
            }
        }
    }

    fn shuffle_read(
        &mut self,
        id: DatasetId,
        side: usize,
        p: usize,
    ) -> Result<Vec<Value>, EngineError> {
        let shuffle = self
            .g
            .shuffles
            .get(&id)
            .ok_or(EngineError::ShuffleMissing(id))?;
        let mut out = Vec::new();
        for m in &shuffle.sides[side] {
            let m = m.as_ref().ok_or(EngineError::ShuffleMissing(id))?;
            out.extend(m.buckets[p].iter().cloned());
        }
        self.elements += out.len() as u64;
        Ok(out)
    }

    fn reduce_side(
        &mut self,
        id: DatasetId,
        node: &Node,
        p: usize,
    ) -> Result<Vec<Value>, EngineError> {
        let op = node.op().ok_or(EngineError::UnknownDataset(id))?;
        match op {
            Op::ReduceByKey(f) => {
                let mut acc: BTreeMap<Value, Value> = BTreeMap::new();
                for v in self.shuffle_read(id, 0, p)? {
                    let (k, val) = split_pair(id, &v)?;
                    match acc.get_mut(k) {
                        Some(a) => *a = f(a, val),
                        None => {
                            acc.insert(k.clone(), val.clone());
                        }
                    }
                }
                Ok(acc.into_iter().map(|(k, v)| Value::pair(k, v)).collect())
            }
            Op::GroupByKey => {
                let groups = group(id, self.shuffle_read(id, 0, p)?)?;
                Ok(groups
                    .into_iter()
                    .map(|(k, vs)| Value::pair(k, Value::list(vs)))
                    .collect())
            }
            Op::Join => {
                let left = group(id, self.shuffle_read(id, 0, p)?)?;
                let right = group(id, self.shuffle_read(id, 1, p)?)?;
                let mut out = Vec::new();
                for (k, lvs) in &left {
                    if let Some(rvs) = right.get(k) {
                        for l in lvs {
                            for r in rvs {
                                out.push(Value::pair(k.clone(), Value::pair(l.clone(), r.clone())));
                            }
                        }
                    }
                }
                Ok(out)
            }
            Op::KeyedState(st) => {
                let new = group(id, self.shuffle_read(id, 0, p)?)?;
                let empty = BTreeMap::new();
                let prev = st.prev.get(p).map(|m| m.as_ref()).unwrap_or(&empty);
                let mut keys: Vec<&Value> = prev.keys().chain(new.keys()).collect();
                keys.sort();
                keys.dedup();
                let mut out = Vec::with_capacity(keys.len());
                for key in keys {
                    self.ctx.add_work(1);
                    let values: &[Value] = new.get(key).map(Vec::as_slice).unwrap_or(&[]);
                    let old = prev.get(key);
                    let expired = values.is_empty()
                        && matches!((old, st.ttl_ms), (Some(e), Some(ttl))
                            if st.batch_time_ms.saturating_sub(e.last_update_ms) > ttl);
                    if expired {
                        out.push(Value::object(StateRecord {
                            key: key.clone(),
                            entry: None,
                            emit: Vec::new(),
                        }));
                        continue;
                    }
                    let outcome = (st.update)(
                        &mut self.ctx,
                        StateCall {
                            key,
                            values,
                            state: old.map(|e| &e.state),
                            batch_time_ms: st.batch_time_ms,
                        },
                    );
                    let entry = outcome.state.map(|state| StateEntry {
                        state,
                        last_update_ms: match old {
                            Some(e) if values.is_empty() => e.last_update_ms,
                            _ => st.batch_time_ms,
                        },
                    });
                    out.push(Value::object(StateRecord {
                        key: key.clone(),
                        entry,
                        emit: outcome.emit,
                    }));
                }
                Ok(out)
            }
            Op::Map(_) | Op::Filter(_) | Op::FlatMap(_) | Op::Union => {
                Err(EngineError::UnknownDataset(id))
            }
        }
    }
}

pub(crate) fn union_source(
    g: &Graph,
    parents: &[DatasetId],
    mut p: usize,
) -> Result<(DatasetId, usize), EngineError> {
    for &parent in parents {
        let n = g.node(parent)?.partitions;
        if p < n {
            return Ok((parent, p));
        }
        p -= n;
    }
    Err(EngineError::IndexOutOfRange {
        index: p,
        partitions: 0,
    })
}

fn split_pair(id: DatasetId, v: &Value) -> Result<(&Value, &Value), EngineError> {
    v.as_pair().ok_or(EngineError::NotKeyed(id))
}

fn bucket(partitioner: &Partitioner, id: DatasetId, key: &Value) -> Result<usize, EngineError> {
    partitioner
        .partition_of(key)
        .ok_or(EngineError::UnhashableKey(id))
}

fn group(id: DatasetId, input: Vec<Value>) -> Result<BTreeMap<Value, Vec<Value>>, EngineError> {
    let mut groups: BTreeMap<Value, Vec<Value>> = BTreeMap::new();
    for v in input {
        let (k, val) = split_pair(id, &v)?;
        groups.entry(k.clone()).or_default().push(val.clone());
    }
    Ok(groups)
}
