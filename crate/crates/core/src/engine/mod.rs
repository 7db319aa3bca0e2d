//! Lazily evaluated, partitioned datasets with lineage-based recovery.
//!
//! Transformations only record lineage. Actions build a stage plan, run the
//! missing shuffle-map stages in dependency order and then the result stage.
//! Lost cache entries and shuffle outputs are recomputed from lineage on
//! demand.

mod context;
mod error;
mod exec;
mod executor;
mod ops;
mod plan;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

pub use context::TaskContext;
pub use error::EngineError;
pub use exec::TaskResult;
pub use executor::{Executor, InlineExecutor, Job};
pub use ops::{
    DependencyKind, FilterFn, FlatMapFn, ForeachFn, MapFn, OpKind, PartitionFn, Partitioner,
    ReduceFn, StateCall, StateEntry, StateFn, StateOp, StateOutcome, StatePartition, StateRecord,
};
pub use plan::{Stage, StageBoundary};

use exec::{Graph, MapOutput, Node, Origin, ResultMode, Shuffle, TaskData, TaskSpec};
use ops::Op;

use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DatasetId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StageId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WorkerId(pub u32);

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "worker-{}", self.0)
    }
}

/// Handle to a dataset registered with an [`Engine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Dataset {
    id: DatasetId,
    partitions: usize,
}

impl Dataset {
    pub fn id(&self) -> DatasetId {
        self.id
    }

    pub fn num_partitions(&self) -> usize {
        self.partitions
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastHandle(pub(crate) u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccumulatorHandle(pub(crate) u64);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TaskMetrics {
    /// Task attempts run, including failed ones.
    pub tasks_executed: u64,
    pub task_failures: u64,
    /// Partitions recomputed after their cached or shuffled copy was lost.
    pub partitions_recomputed: u64,
    /// Shuffle-map stages that wrote a fresh shuffle.
    pub shuffles: u64,
    pub stages_run: u64,
    /// Stages re-run only to restore lost outputs.
    pub stages_resubmitted: u64,
}

/// Virtual execution cost, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostModel {
    pub task_base_us: u64,
    pub per_element_us: u64,
    pub per_work_unit_us: u64,
    pub stage_overhead_us: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            task_base_us: 1_000,
            per_element_us: 2,
            per_work_unit_us: 5,
            stage_overhead_us: 5_000,
        }
    }
}

/// Decides whether a finished task attempt counts as failed.
pub type FaultInjector = Arc<dyn Fn(&FaultProbe) -> bool + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultProbe {
    pub stage: StageId,
    pub partition: usize,
    pub attempt: u32,
    pub worker: WorkerId,
}

#[derive(Clone)]
pub struct EngineConfig {
    /// One entry per compute slot; tasks are assigned round-robin.
    pub slots: Vec<WorkerId>,
    pub cost: CostModel,
    pub max_attempts: u32,
}

impl EngineConfig {
    /// `workers × slots_per_worker` slots, interleaved across workers.
    pub fn cluster(workers: u32, slots_per_worker: u32) -> Self {
        let mut slots = Vec::new();
        for _ in 0..slots_per_worker {
            slots.extend((0..workers).map(WorkerId));
        }
        EngineConfig {
            slots,
            cost: CostModel::default(),
            max_attempts: 3,
        }
    }
}

struct Accumulator {
    total: Value,
    merge: ReduceFn,
}

pub struct Engine {
    graph: Graph,
    next_id: u64,
    next_stage: u32,
    next_handle: u64,
    accumulators: BTreeMap<u64, Accumulator>,
    broadcast_copies: BTreeMap<u64, BTreeSet<WorkerId>>,
    metrics: TaskMetrics,
    config: EngineConfig,
    executor: Arc<dyn Executor>,
    injector: Option<FaultInjector>,
    time_ms: u64,
    cost_us: u64,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("datasets", &self.graph.nodes.len())
            .field("slots", &self.config.slots.len())
            .field("metrics", &self.metrics)
            .finish()
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        Engine {
            graph: Graph::default(),
            next_id: 0,
            next_stage: 0,
            next_handle: 0,
            accumulators: BTreeMap::new(),
            broadcast_copies: BTreeMap::new(),
            metrics: TaskMetrics::default(),
            config,
            executor: Arc::new(InlineExecutor),
            injector: None,
            time_ms: 0,
            cost_us: 0,
        }
    }

    /// A single worker with `slots` compute slots.
    pub fn local(slots: u32) -> Self {
        Engine::new(EngineConfig::cluster(1, slots))
    }

    pub fn set_executor(&mut self, executor: Arc<dyn Executor>) {
        self.executor = executor;
    }

    pub fn set_fault_injector(&mut self, injector: Option<FaultInjector>) {
        self.injector = injector;
    }

    pub fn set_slots(&mut self, slots: Vec<WorkerId>) {
        self.config.slots = slots;
    }

    pub fn slots(&self) -> &[WorkerId] {
        &self.config.slots
    }

    pub fn set_cost_model(&mut self, cost: CostModel) {
        self.config.cost = cost;
    }

    /// Logical time passed to tasks through [`TaskContext::time_ms`].
    pub fn set_time(&mut self, time_ms: u64) {
        self.time_ms = time_ms;
    }

    pub fn metrics(&self) -> TaskMetrics {
        self.metrics
    }

    /// Virtual cost accumulated since the last call, in microseconds.
    pub fn take_cost(&mut self) -> u64 {
        core::mem::take(&mut self.cost_us)
    }

    fn register(
        &mut self,
        origin: Origin,
        partitions: usize,
        partitioner: Option<Partitioner>,
    ) -> Dataset {
        let id = DatasetId(self.next_id);
        self.next_id += 1;
        self.graph.nodes.insert(
            id,
            Node {
                origin,
                partitions,
                partitioner,
                persisted: false,
                cache: BTreeMap::new(),
                computations: 0,
            },
        );
        Dataset { id, partitions }
    }

    fn transform(
        &mut self,
        op: Op,
        parents: Vec<DatasetId>,
        partitions: usize,
        p: Option<Partitioner>,
    ) -> Dataset {
        self.register(Origin::Transform { op, parents }, partitions, p)
    }

    /// Splits `items` into contiguous chunks; earlier partitions take the
    /// remainder.
    pub fn parallelize(
        &mut self,
        items: Vec<Value>,
        partitions: usize,
    ) -> Result<Dataset, EngineError> {
        if partitions == 0 {
            return Err(EngineError::ZeroPartitions);
        }
        let base = items.len() / partitions;
        let extra = items.len() % partitions;
        let mut rest = items.into_iter();
        let parts = (0..partitions)
            .map(|i| {
                let n = base + usize::from(i < extra);
                Arc::new(rest.by_ref().take(n).collect::<Vec<_>>())
            })
            .collect();
        Ok(self.register(Origin::Source(Arc::new(parts)), partitions, None))
    }

    pub fn map<F>(&mut self, ds: Dataset, f: F) -> Dataset
    where
        F: Fn(&mut TaskContext<'_>, &Value) -> Value + Send + Sync + 'static,
    {
        self.transform(
            Op::Map(Arc::new(f)),
            alloc::vec![ds.id],
            ds.partitions,
            None,
        )
    }

    pub fn filter<F>(&mut self, ds: Dataset, f: F) -> Dataset
    where
        F: Fn(&mut TaskContext<'_>, &Value) -> bool + Send + Sync + 'static,
    {
        self.transform(
            Op::Filter(Arc::new(f)),
            alloc::vec![ds.id],
            ds.partitions,
            None,
        )
    }

    pub fn flat_map<F>(&mut self, ds: Dataset, f: F) -> Dataset
    where
        F: Fn(&mut TaskContext<'_>, &Value) -> Vec<Value> + Send + Sync + 'static,
    {
        self.transform(
            Op::FlatMap(Arc::new(f)),
            alloc::vec![ds.id],
            ds.partitions,
            None,
        )
    }

    pub fn union(&mut self, a: Dataset, b: Dataset) -> Dataset {
        self.union_all(&[a, b])
    }

    /// Concatenates partitions in argument order. Panics on an empty slice.
    pub fn union_all(&mut self, parts: &[Dataset]) -> Dataset {
        assert!(!parts.is_empty(), "union of zero datasets");
        let n = parts.iter().map(|d| d.partitions).sum();
        self.transform(Op::Union, parts.iter().map(|d| d.id).collect(), n, None)
    }

    pub fn reduce_by_key<F>(
        &mut self,
        ds: Dataset,
        f: F,
        partitioner: Option<Partitioner>,
    ) -> Dataset
    where
        F: Fn(&Value, &Value) -> Value + Send + Sync + 'static,
    {
        let p = partitioner.unwrap_or_else(|| Partitioner::hash(ds.partitions));
        self.transform(
            Op::ReduceByKey(Arc::new(f)),
            alloc::vec![ds.id],
            p.partitions(),
            Some(p),
        )
    }

    pub fn group_by_key(&mut self, ds: Dataset, partitioner: Option<Partitioner>) -> Dataset {
        let p = partitioner.unwrap_or_else(|| Partitioner::hash(ds.partitions));
        self.transform(Op::GroupByKey, alloc::vec![ds.id], p.partitions(), Some(p))
    }

    /// Inner join on key; elements are `(k, (left, right))`.
    pub fn join(
        &mut self,
        left: Dataset,
        right: Dataset,
        partitioner: Option<Partitioner>,
    ) -> Dataset {
        let p = partitioner.unwrap_or_else(|| Partitioner::hash(left.partitions));
        self.transform(
            Op::Join,
            alloc::vec![left.id, right.id],
            p.partitions(),
            Some(p),
        )
    }

    /// Applies `op.update` per key, one output partition per entry of
    /// `op.prev`. Elements are [`StateRecord`] objects.
    pub fn keyed_state(&mut self, ds: Dataset, op: StateOp) -> Dataset {
        let n = op.prev.len().max(1);
        let p = Partitioner::hash(n);
        self.transform(Op::KeyedState(Arc::new(op)), alloc::vec![ds.id], n, Some(p))
    }

    pub fn persist(&mut self, ds: Dataset) -> Dataset {
        if let Some(n) = self.graph.nodes.get_mut(&ds.id) {
            n.persisted = true;
        }
        ds
    }

    pub fn unpersist(&mut self, ds: Dataset) {
        if let Some(n) = self.graph.nodes.get_mut(&ds.id) {
            n.persisted = false;
            n.cache.clear();
        }
    }

    pub fn is_cached(&self, ds: Dataset, partition: usize) -> bool {
        self.cached_location(ds, partition).is_some()
    }

    pub fn cached_location(&self, ds: Dataset, partition: usize) -> Option<WorkerId> {
        let node = self.graph.nodes.get(&ds.id)?;
        node.cache.get(&partition).map(|(_, w)| *w)
    }

    /// Partitions of `ds` this engine computed (not read from cache) so far.
    pub fn dataset_computations(&self, ds: Dataset) -> u64 {
        self.graph.nodes.get(&ds.id).map_or(0, |n| n.computations)
    }

    pub fn kind(&self, ds: Dataset) -> Option<OpKind> {
        self.kind_of(ds.id)
    }

    /// Same as [`Engine::kind`], by id, for walking stage pipelines.
    pub fn kind_of(&self, id: DatasetId) -> Option<OpKind> {
        let node = self.graph.nodes.get(&id)?;
        Some(node.op().map_or(OpKind::Source, Op::kind))
    }

    pub fn parents(&self, ds: Dataset) -> Vec<Dataset> {
        let Some(node) = self.graph.nodes.get(&ds.id) else {
            return Vec::new();
        };
        node.parents()
            .iter()
            .filter_map(|p| {
                let n = self.graph.nodes.get(p)?;
                Some(Dataset {
                    id: *p,
                    partitions: n.partitions,
                })
            })
            .collect()
    }

    pub fn drop_cached_partition(&mut self, ds: Dataset, partition: usize) -> bool {
        self.graph
            .nodes
            .get_mut(&ds.id)
            .is_some_and(|n| n.cache.remove(&partition).is_some())
    }

    pub fn build_stages(&self, ds: Dataset) -> Result<Vec<Stage>, EngineError> {
        plan::build(&self.graph, ds.id)
    }

    pub fn broadcast(&mut self, value: Value) -> BroadcastHandle {
        let id = self.next_handle;
        self.next_handle += 1;
        self.graph.broadcasts.insert(id, Arc::new(value));
        BroadcastHandle(id)
    }

    /// Driver-side read of a broadcast value.
    pub fn broadcast_value(&self, h: &BroadcastHandle) -> Option<&Value> {
        self.graph.broadcasts.get(&h.0).map(|v| v.as_ref())
    }

    /// Workers that resolved the broadcast; each holds one copy.
    pub fn broadcast_copies(&self, h: &BroadcastHandle) -> Vec<WorkerId> {
        self.broadcast_copies
            .get(&h.0)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }

    pub fn accumulator<F>(&mut self, zero: Value, merge: F) -> AccumulatorHandle
    where
        F: Fn(&Value, &Value) -> Value + Send + Sync + 'static,
    {
        let id = self.next_handle;
        self.next_handle += 1;
        self.accumulators.insert(
            id,
            Accumulator {
                total: zero,
                merge: Arc::new(merge),
            },
        );
        AccumulatorHandle(id)
    }

    pub fn accumulator_value(&self, h: &AccumulatorHandle) -> Result<Value, EngineError> {
        self.accumulators
            .get(&h.0)
            .map(|a| a.total.clone())
            .ok_or(EngineError::UnknownAccumulator(h.0))
    }

    pub fn collect(&mut self, ds: Dataset) -> Result<Vec<Value>, EngineError> {
        let parts =
            self.run_result(ds, (0..ds.partitions).collect(), false, ResultMode::Collect)?;
        let mut out = Vec::new();
        for d in parts {
            if let TaskData::Values(v) = d {
                out.extend(v.iter().cloned());
            }
        }
        Ok(out)
    }

    /// Collects each partition separately, in partition order.
    pub fn collect_partitions(&mut self, ds: Dataset) -> Result<Vec<Vec<Value>>, EngineError> {
        let parts =
            self.run_result(ds, (0..ds.partitions).collect(), false, ResultMode::Collect)?;
        Ok(parts
            .into_iter()
            .map(|d| match d {
                TaskData::Values(v) => v.as_ref().clone(),
                _ => Vec::new(),
            })
            .collect())
    }

    pub fn count(&mut self, ds: Dataset) -> Result<u64, EngineError> {
        let parts = self.run_result(ds, (0..ds.partitions).collect(), false, ResultMode::Count)?;
        Ok(parts
            .into_iter()
            .map(|d| match d {
                TaskData::Count(n) => n,
                _ => 0,
            })
            .sum())
    }

    pub fn foreach<F>(&mut self, ds: Dataset, f: F) -> Result<(), EngineError>
    where
        F: Fn(&mut TaskContext<'_>, &Value) + Send + Sync + 'static,
    {
        let mode = ResultMode::Foreach(Arc::new(f));
        self.run_result(ds, (0..ds.partitions).collect(), false, mode)?;
        Ok(())
    }

    /// Runs the dataset without returning it; fills the cache of a persisted
    /// dataset.
    pub fn materialize(&mut self, ds: Dataset) -> Result<(), EngineError> {
        self.run_result(ds, (0..ds.partitions).collect(), false, ResultMode::Count)?;
        Ok(())
    }

    /// Recomputes one partition from lineage, ignoring its own cache entry
    /// but stopping at cached ancestors and existing shuffle outputs.
    pub fn recompute_partition(
        &mut self,
        ds: Dataset,
        partition: usize,
    ) -> Result<Vec<Value>, EngineError> {
        if partition >= ds.partitions {
            return Err(EngineError::IndexOutOfRange {
                index: partition,
                partitions: ds.partitions,
            });
        }
        self.metrics.partitions_recomputed += 1;
        let mut out = self.run_result(ds, alloc::vec![partition], true, ResultMode::Collect)?;
        match out.pop() {
            Some(TaskData::Values(v)) => Ok(v.as_ref().clone()),
            _ => Ok(Vec::new()),
        }
    }

    /// Restores every lost cache partition of `ds` (after a worker loss) and
    /// returns how many partitions were recomputed.
    pub fn recover_cached(&mut self, ds: Dataset) -> Result<usize, EngineError> {
        let node = self.graph.node(ds.id)?;
        let missing: Vec<usize> = (0..ds.partitions)
            .filter(|p| !node.cache.contains_key(p))
            .collect();
        if missing.is_empty() {
            return Ok(0);
        }
        self.metrics.partitions_recomputed += missing.len() as u64;
        self.metrics.stages_resubmitted += 1;
        let n = missing.len();
        self.run_result(ds, missing, false, ResultMode::Count)?;
        Ok(n)
    }

    /// Drops the worker's slots and everything it held: cached partitions
    /// and shuffle map outputs.
    pub fn remove_worker(&mut self, worker: WorkerId) {
        self.config.slots.retain(|w| *w != worker);
        for node in self.graph.nodes.values_mut() {
            node.cache.retain(|_, (_, w)| *w != worker);
        }
        for shuffle in self.graph.shuffles.values_mut() {
            for side in &mut shuffle.sides {
                for out in side.iter_mut() {
                    if out.as_ref().is_some_and(|o| o.worker == worker) {
                        *out = None;
                    }
                }
            }
        }
        for copies in self.broadcast_copies.values_mut() {
            copies.remove(&worker);
        }
    }

    /// Forgets datasets together with their caches and shuffle outputs.
    /// Datasets derived from them can no longer be evaluated.
    pub fn remove_datasets(&mut self, ids: &[Dataset]) {
        for ds in ids {
            self.graph.nodes.remove(&ds.id);
            self.graph.shuffles.remove(&ds.id);
        }
    }

    pub fn dataset_count(&self) -> usize {
        self.graph.nodes.len()
    }

    fn run_result(
        &mut self,
        ds: Dataset,
        partitions: Vec<usize>,
        bypass_cache: bool,
        mode: ResultMode,
    ) -> Result<Vec<TaskData>, EngineError> {
        let node = self.graph.node(ds.id)?;
        let mut needed = BTreeSet::new();
        for &p in &partitions {
            if p >= node.partitions {
                return Err(EngineError::IndexOutOfRange {
                    index: p,
                    partitions: node.partitions,
                });
            }
            if bypass_cache || !node.cache.contains_key(&p) {
                needed.insert(p);
            }
        }
        if bypass_cache {
            self.ensure_parents(ds.id, &needed)?;
        } else {
            self.ensure(ds.id, &needed)?;
        }
        let specs = partitions
            .iter()
            .map(|&p| TaskSpec::Result {
                ds: ds.id,
                partition: p,
                bypass_cache,
                mode: mode.clone(),
            })
            .collect();
        self.run_stage(specs)
    }

    /// Makes sure every shuffle feeding the given partitions of `id` is
    /// complete, running map stages in dependency order.
    fn ensure(&mut self, id: DatasetId, parts: &BTreeSet<usize>) -> Result<(), EngineError> {
        if parts.is_empty() {
            return Ok(());
        }
        let node = self.graph.node(id)?;
        let missing: BTreeSet<usize> = parts
            .iter()
            .copied()
            .filter(|p| !node.cache.contains_key(p))
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        self.ensure_parents(id, &missing)
    }

    fn ensure_parents(
        &mut self,
        id: DatasetId,
        parts: &BTreeSet<usize>,
    ) -> Result<(), EngineError> {
        let node = self.graph.node(id)?;
        let parents = node.parents().to_vec();
        if node.is_wide() {
            return self.ensure_shuffle(id, &parents);
        }
        match node.op() {
            None => Ok(()),
            Some(Op::Union) => {
                let mut per_parent: BTreeMap<DatasetId, BTreeSet<usize>> = BTreeMap::new();
                for &p in parts {
                    let (parent, q) = exec::union_source(&self.graph, &parents, p)?;
                    per_parent.entry(parent).or_default().insert(q);
                }
                for (parent, qs) in per_parent {
                    self.ensure(parent, &qs)?;
                }
                Ok(())
            }
            Some(_) => self.ensure(parents[0], parts),
        }
    }

    fn ensure_shuffle(
        &mut self,
        wide: DatasetId,
        parents: &[DatasetId],
    ) -> Result<(), EngineError> {
        let fresh = !self.graph.shuffles.contains_key(&wide);
        if fresh {
            let sides = parents
                .iter()
                .map(|p| Ok((0..self.graph.node(*p)?.partitions).map(|_| None).collect()))
                .collect::<Result<Vec<_>, EngineError>>()?;
            self.graph.shuffles.insert(wide, Shuffle { sides });
        }
        let shuffle = &self.graph.shuffles[&wide];
        if shuffle.is_complete() {
            return Ok(());
        }
        let missing: Vec<Vec<usize>> = (0..parents.len()).map(|s| shuffle.missing(s)).collect();
        for (side, parent) in parents.iter().enumerate() {
            let parts: BTreeSet<usize> = missing[side].iter().copied().collect();
            self.ensure(*parent, &parts)?;
        }
        let mut specs = Vec::new();
        for (side, ms) in missing.iter().enumerate() {
            for &partition in ms {
                specs.push(TaskSpec::ShuffleMap {
                    wide,
                    side,
                    partition,
                });
            }
        }
        if fresh {
            self.metrics.shuffles += 1;
        } else {
            self.metrics.stages_resubmitted += 1;
            self.metrics.partitions_recomputed += specs.len() as u64;
        }
        self.run_stage(specs)?;
        Ok(())
    }

    /// Runs one stage's tasks with retries, merges accepted results and
    /// charges the stage's makespan to the cost meter.
    fn run_stage(&mut self, specs: Vec<TaskSpec>) -> Result<Vec<TaskData>, EngineError> {
        if self.config.slots.is_empty() {
            return Err(EngineError::NoWorkers);
        }
        let stage = StageId(self.next_stage);
        self.next_stage += 1;
        self.metrics.stages_run += 1;
        let n_slots = self.config.slots.len();
        let mut slot_load = alloc::vec![0u64; n_slots];
        let mut results: Vec<Option<TaskData>> = (0..specs.len()).map(|_| None).collect();
        let mut pending: Vec<usize> = (0..specs.len()).collect();
        let mut attempt = 0u32;
        while !pending.is_empty() {
            attempt += 1;
            let slots = &self.config.slots;
            let graph = &self.graph;
            let time = self.time_ms;
            let assigned: Vec<(usize, usize)> = pending
                .iter()
                .map(|&i| (i, (i + attempt as usize - 1) % n_slots))
                .collect();
            let jobs: Vec<Job<'_>> = assigned
                .iter()
                .map(|&(i, slot)| {
                    let spec = &specs[i];
                    let worker = slots[slot];
                    let job: Job<'_> =
                        alloc::boxed::Box::new(move || exec::run_task(graph, spec, worker, time));
                    job
                })
                .collect();
            let outs = self.executor.run_all(jobs);
            let mut retry = Vec::new();
            for ((i, slot), out) in assigned.into_iter().zip(outs) {
                self.metrics.tasks_executed += 1;
                let c = &self.config.cost;
                slot_load[slot] += c.task_base_us
                    + c.per_element_us * out.elements
                    + c.per_work_unit_us * out.work;
                let worker = self.config.slots[slot];
                let data = out.data?;
                let partition = match &specs[i] {
                    TaskSpec::Result { partition, .. } | TaskSpec::ShuffleMap { partition, .. } => {
                        *partition
                    }
                };
                let failed = self.injector.as_ref().is_some_and(|f| {
                    f(&FaultProbe {
                        stage,
                        partition,
                        attempt,
                        worker,
                    })
                });
                if failed {
                    self.metrics.task_failures += 1;
                    if attempt >= self.config.max_attempts {
                        return Err(EngineError::TaskFailed {
                            stage,
                            partition,
                            attempts: attempt,
                        });
                    }
                    retry.push(i);
                    continue;
                }
                for (acc, delta) in out.partials {
                    let a = self
                        .accumulators
                        .get_mut(&acc)
                        .ok_or(EngineError::UnknownAccumulator(acc))?;
                    a.total = (a.merge)(&a.total, &delta);
                }
                for b in out.fetched {
                    self.broadcast_copies.entry(b).or_default().insert(worker);
                }
                for id in out.computed {
                    if let Some(n) = self.graph.nodes.get_mut(&id) {
                        n.computations += 1;
                    }
                }
                for (id, p, data) in out.cached {
                    if let Some(n) = self.graph.nodes.get_mut(&id) {
                        if n.persisted {
                            n.cache.entry(p).or_insert((data, worker));
                        }
                    }
                }
                results[i] = Some(match (data, &specs[i]) {
                    (
                        TaskData::Buckets(b),
                        TaskSpec::ShuffleMap {
                            wide,
                            side,
                            partition,
                        },
                    ) => {
                        if let Some(s) = self.graph.shuffles.get_mut(wide) {
                            s.sides[*side][*partition] = Some(MapOutput {
                                worker,
                                buckets: Arc::new(b),
                            });
                        }
                        TaskData::Unit
                    }
                    (d, _) => d,
                });
            }
            pending = retry;
        }
        let makespan = slot_load.into_iter().max().unwrap_or(0);
        self.cost_us += makespan + self.config.cost.stage_overhead_us;
        Ok(results
            .into_iter()
            .map(|r| r.unwrap_or(TaskData::Unit))
            .collect())
    }
}
