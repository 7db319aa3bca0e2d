//! Runtime of one streaming application on the virtual clock.
//!
//! Receivers pull from the broker at every block boundary. At every interval
//! boundary the received blocks are sealed into a batch. Batches run one at
//! a time: a batch is computed when it starts and committed (outputs, state,
//! checkpoint) when its virtual processing time has elapsed.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::checkpoint::{CheckpointImage, OperatorState};
use super::graph::{NodeKind, OutputContext, StreamingContext};
use super::wal::WalRecord;
use super::{BatchStats, StreamError};
use crate::engine::{
    CostModel, Dataset, Engine, EngineConfig, Executor, StateOp, StatePartition, StateRecord,
    WorkerId,
};
use crate::theta::{Envelope, MessageId, Services};
use crate::value::Value;

#[derive(Clone)]
pub struct StreamConfig {
    pub checkpointing: bool,
    pub checkpoint_period_ms: u64,
    pub wal: bool,
    pub replication_factor: usize,
    /// Time until a lost executor is noticed and its tasks are rescheduled.
    pub detection_delay_ms: u64,
    pub receiver_restart_ms: u64,
    pub cost: CostModel,
    pub max_output_attempts: u32,
    pub executor: Option<Arc<dyn Executor>>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            checkpointing: true,
            checkpoint_period_ms: 10_000,
            wal: true,
            replication_factor: 2,
            detection_delay_ms: 2_000,
            receiver_restart_ms: 2_000,
            cost: CostModel::default(),
            max_output_attempts: 3,
            executor: None,
        }
    }
}

/// Monotone counters of one application instance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AppCounters {
    /// Records stored into blocks (replays excluded).
    pub received: u64,
    /// Records of committed batches (replays included).
    pub processed: u64,
    pub dead_letters: u64,
    pub duplicates_dropped: u64,
    pub replication_failures: u64,
    /// Messages consumed by a receiver that died before storing them, in
    /// auto-ack mode; these are gone.
    pub lost_in_receiver: u64,
    /// Stages re-run to recover an in-flight batch after a worker loss.
    pub recomputed_stages: u64,
    pub checkpoints: u64,
}

struct Receiver {
    worker: Option<WorkerId>,
    started_at: u64,
}

struct Sealed {
    id: u64,
    inputs: Vec<Vec<Value>>,
}

struct Running {
    id: u64,
    start: u64,
    end: u64,
    input_count: u64,
    waiting_at_start: usize,
    outputs: Vec<(usize, Vec<Value>)>,
    states: Vec<(u32, OperatorState)>,
    persisted: Vec<Dataset>,
}

pub struct StreamingApp {
    ctx: StreamingContext,
    config: StreamConfig,
    engine: Engine,
    interval: u64,
    block_ms: u64,
    max_window: u64,
    slots: Vec<WorkerId>,
    workers: BTreeSet<WorkerId>,
    receivers: Vec<Receiver>,
    next_block: u64,
    blocks: BTreeMap<u64, Vec<Vec<Value>>>,
    waiting: VecDeque<Sealed>,
    running: Option<Running>,
    states: BTreeMap<u32, OperatorState>,
    history: BTreeMap<(usize, u64), Dataset>,
    batch_datasets: BTreeMap<u64, Vec<Dataset>>,
    state_datasets: Vec<Dataset>,
    state_lost: bool,
    wal_seq: u64,
    wal_ids: BTreeMap<MessageId, u64>,
    seq_by_interval: BTreeMap<u64, u64>,
    wal_high_water: u64,
    completed: Vec<BatchStats>,
    history_stats: Vec<BatchStats>,
    counters: AppCounters,
    last_batch: u64,
    failed: Option<StreamError>,
    now: u64,
}

fn block_len(interval: u64) -> u64 {
    (1..=interval.min(200))
        .rev()
        .find(|d| interval.is_multiple_of(*d))
        .unwrap_or(1)
}

fn empty_state(partitions: usize) -> OperatorState {
    (0..partitions)
        .map(|_| Arc::new(StatePartition::new()))
        .collect()
}

impl StreamingApp {
    /// Starts a fresh application at `now` on the given slots. Receivers
    /// take the first slots; the rest run tasks.
    pub fn start(
        ctx: StreamingContext,
        config: StreamConfig,
        slots: Vec<WorkerId>,
        now: u64,
        services: &mut Services,
    ) -> Result<Self, StreamError> {
        let app = Self::build(ctx, config, slots, now, services)?;
        Ok(app)
    }

    fn build(
        ctx: StreamingContext,
        config: StreamConfig,
        slots: Vec<WorkerId>,
        now: u64,
        services: &mut Services,
    ) -> Result<Self, StreamError> {
        let n_recv = ctx.receivers.len();
        if slots.len() <= n_recv {
            return Err(StreamError::NoFreeCore {
                slots: slots.len(),
                receivers: n_recv,
            });
        }
        let interval = ctx.batch_interval_ms();
        let block_ms = block_len(interval);
        let receivers = slots[..n_recv]
            .iter()
            .map(|w| Receiver {
                worker: Some(*w),
                started_at: now,
            })
            .collect();
        for r in &ctx.receivers {
            services.broker.subscribe(&r.group, &r.topic);
        }
        let mut engine = Engine::new(EngineConfig {
            slots: slots[n_recv..].to_vec(),
            cost: config.cost,
            max_attempts: 3,
        });
        if let Some(x) = &config.executor {
            engine.set_executor(x.clone());
        }
        let mut states = BTreeMap::new();
        for n in &ctx.nodes {
            if let NodeKind::State { op, spec, .. } = &n.kind {
                states.insert(*op, empty_state(spec.partitions));
            }
        }
        let max_window = ctx.max_window();
        let workers = slots.iter().copied().collect();
        Ok(StreamingApp {
            ctx,
            config,
            engine,
            interval,
            block_ms,
            max_window,
            slots,
            workers,
            receivers,
            next_block: (now / block_ms + 1) * block_ms,
            blocks: BTreeMap::new(),
            waiting: VecDeque::new(),
            running: None,
            states,
            history: BTreeMap::new(),
            batch_datasets: BTreeMap::new(),
            state_datasets: Vec::new(),
            state_lost: false,
            wal_seq: 0,
            wal_ids: BTreeMap::new(),
            seq_by_interval: BTreeMap::new(),
            wal_high_water: 0,
            completed: Vec::new(),
            history_stats: Vec::new(),
            counters: AppCounters::default(),
            last_batch: now / interval,
            failed: None,
            now,
        })
    }

    /// Restarts a driver at `now`: restores the latest checkpoint, replays
    /// the write-ahead log into the batches that follow it and queues every
    /// interval up to the current one, empty ones included.
    pub fn recover(
        ctx: StreamingContext,
        config: StreamConfig,
        slots: Vec<WorkerId>,
        now: u64,
        services: &mut Services,
    ) -> Result<Self, StreamError> {
        let mut app = Self::build(ctx, config, slots, now, services)?;
        let image = services
            .durable
            .latest_checkpoint()
            .map_err(StreamError::Storage)?;
        let records = services
            .durable
            .wal_records()
            .map_err(StreamError::Storage)?;
        let current = now / app.interval + 1;
        let first_logged = records.iter().map(|r| app.interval_of(r.receive_ts)).min();
        let last_done = match &image {
            Some(img) => {
                for (op, st) in &img.states {
                    if app.states.contains_key(op) {
                        app.states.insert(*op, st.clone());
                    }
                }
                app.wal_high_water = img.wal_high_water;
                img.last_batch
            }
            None => first_logged.map_or(current - 1, |i| i - 1),
        };
        app.last_batch = last_done;
        let n_recv = app.ctx.receivers.len();
        let mut by_interval: BTreeMap<u64, Vec<Vec<Value>>> = BTreeMap::new();
        for r in &records {
            app.wal_seq = app.wal_seq.max(r.seq + 1);
            app.wal_ids.insert(r.message_id, r.receive_ts);
            let k = app.interval_of(r.receive_ts);
            *app.seq_by_interval.entry(k).or_default() =
                r.seq.max(app.seq_by_interval.get(&k).copied().unwrap_or(0));
            let spec = &app.ctx.receivers[(r.receiver as usize).min(n_recv - 1)];
            let v = match (spec.decode)(r.message_id, &r.payload) {
                Ok(v) => v,
                Err(_) => continue,
            };
            by_interval
                .entry(k)
                .or_insert_with(|| vec![Vec::new(); n_recv])[r.receiver as usize]
                .push(v);
        }
        // Window history: earlier intervals feed windows that end after the
        // checkpoint.
        if app.max_window > 1 {
            let from = last_done.saturating_sub(app.max_window - 2).max(1);
            for k in from..=last_done {
                let inputs = by_interval
                    .get(&k)
                    .cloned()
                    .unwrap_or_else(|| vec![Vec::new(); n_recv]);
                app.evaluate(k, &inputs, true).map_err(|e| app.fail(e))?;
            }
        }
        for k in (last_done + 1)..current {
            let inputs = by_interval
                .remove(&k)
                .unwrap_or_else(|| vec![Vec::new(); n_recv]);
            app.waiting.push_back(Sealed { id: k, inputs });
        }
        // Records of the interval still open belong to the next sealed batch.
        app.blocks = by_interval.split_off(&current);
        app.try_start(now)?;
        Ok(app)
    }

    fn interval_of(&self, ts: u64) -> u64 {
        ts / self.interval + 1
    }

    fn fail(&mut self, e: StreamError) -> StreamError {
        self.failed = Some(e.clone());
        e
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn batch_interval_ms(&self) -> u64 {
        self.interval
    }

    pub fn waiting_batches(&self) -> usize {
        self.waiting.len()
    }

    pub fn is_running_batch(&self) -> bool {
        self.running.is_some()
    }

    pub fn counters(&self) -> AppCounters {
        self.counters
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn failure(&self) -> Option<&StreamError> {
        self.failed.as_ref()
    }

    /// Last committed batch id.
    pub fn last_batch(&self) -> u64 {
        self.last_batch
    }

    /// Stats of batches completed since the last call.
    pub fn drain_completed(&mut self) -> Vec<BatchStats> {
        core::mem::take(&mut self.completed)
    }

    /// All batch stats of this application instance.
    pub fn stats(&self) -> &[BatchStats] {
        &self.history_stats
    }

    /// Live keyed state of one operator, all partitions merged.
    pub fn state(&self, op: u32) -> Vec<(Value, Value)> {
        self.states
            .get(&op)
            .map(|parts| {
                parts
                    .iter()
                    .flat_map(|p| p.iter().map(|(k, e)| (k.clone(), e.state.clone())))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn state_count(&self, op: u32) -> usize {
        self.states
            .get(&op)
            .map_or(0, |parts| parts.iter().map(|p| p.len()).sum())
    }

    /// Workers currently hosting receivers.
    pub fn receiver_workers(&self) -> Vec<Option<WorkerId>> {
        self.receivers.iter().map(|r| r.worker).collect()
    }

    /// Processes every event up to and including time `t`.
    pub fn advance_to(&mut self, t: u64, services: &mut Services) -> Result<(), StreamError> {
        if let Some(e) = &self.failed {
            return Err(e.clone());
        }
        loop {
            let done = self.running.as_ref().map_or(u64::MAX, |r| r.end);
            let block = self.next_block;
            if done.min(block) > t {
                break;
            }
            if done <= block {
                self.now = done;
                self.complete(services)?;
                self.try_start(done)?;
            } else {
                self.now = block;
                self.ingest(block, services)?;
                if block.is_multiple_of(self.interval) {
                    let id = block / self.interval;
                    let inputs = self
                        .blocks
                        .remove(&id)
                        .unwrap_or_else(|| vec![Vec::new(); self.receivers.len()]);
                    self.waiting.push_back(Sealed { id, inputs });
                }
                self.next_block += self.block_ms;
                self.try_start(block)?;
            }
        }
        self.now = self.now.max(t);
        Ok(())
    }

    fn ingest(&mut self, at: u64, services: &mut Services) -> Result<(), StreamError> {
        for i in 0..self.receivers.len() {
            let r = &self.receivers[i];
            if r.worker.is_none() || r.started_at >= at {
                continue;
            }
            let spec = self.ctx.receivers[i].clone();
            let mut got = Vec::new();
            loop {
                let env = if spec.reliable {
                    services.broker.consume(&spec.group, &spec.topic, at - 1)
                } else {
                    services
                        .broker
                        .consume_auto_ack(&spec.group, &spec.topic, at - 1)
                }
                .map_err(StreamError::Broker)?;
                match env {
                    Some(e) => got.push(e),
                    None => break,
                }
            }
            if got.is_empty() {
                continue;
            }
            if spec.reliable && self.workers.len() < self.config.replication_factor {
                self.counters.replication_failures += 1;
                for e in &got {
                    services
                        .broker
                        .nack(&spec.group, &spec.topic, e.delivery_id, at)
                        .map_err(StreamError::Broker)?;
                }
                continue;
            }
            self.store_block(i, got, services)?;
        }
        Ok(())
    }

    fn store_block(
        &mut self,
        i: usize,
        block: Vec<Envelope>,
        services: &mut Services,
    ) -> Result<(), StreamError> {
        let spec = self.ctx.receivers[i].clone();
        let started_at = self.receivers[i].started_at;
        let n_recv = self.receivers.len();
        for (pos, e) in block.iter().enumerate() {
            if self.config.wal && self.wal_ids.contains_key(&e.message_id) {
                self.counters.duplicates_dropped += 1;
                if spec.reliable {
                    services
                        .broker
                        .ack(&spec.group, &spec.topic, e.delivery_id)
                        .map_err(StreamError::Broker)?;
                }
                continue;
            }
            let value = match (spec.decode)(e.message_id, &e.payload) {
                Ok(v) => v,
                Err(reason) => {
                    self.counters.dead_letters += 1;
                    let topic = format!("{}.dead-letter", spec.topic);
                    let body = dead_letter_json(e.message_id, &reason);
                    services.broker.publish(&topic, body.as_bytes(), self.now);
                    if spec.reliable {
                        services
                            .broker
                            .ack(&spec.group, &spec.topic, e.delivery_id)
                            .map_err(StreamError::Broker)?;
                    }
                    continue;
                }
            };
            let receive_ts = e.available_ts.max(started_at);
            let k = self.interval_of(receive_ts);
            if self.config.wal {
                let rec = WalRecord {
                    seq: self.wal_seq,
                    message_id: e.message_id,
                    receiver: i as u32,
                    payload: e.payload.clone(),
                    receive_ts,
                };
                if let Err(err) = services.durable.wal_append(&rec) {
                    for rest in &block[pos..] {
                        if spec.reliable {
                            let _ = services.broker.nack(
                                &spec.group,
                                &spec.topic,
                                rest.delivery_id,
                                self.now,
                            );
                        }
                    }
                    return Err(self.fail(StreamError::WalWriteFailed(err)));
                }
                self.seq_by_interval.insert(k, self.wal_seq);
                self.wal_ids.insert(e.message_id, receive_ts);
                self.wal_seq += 1;
            }
            self.blocks
                .entry(k)
                .or_insert_with(|| vec![Vec::new(); n_recv])[i]
                .push(value);
            self.counters.received += 1;
            if spec.reliable {
                services
                    .broker
                    .ack(&spec.group, &spec.topic, e.delivery_id)
                    .map_err(StreamError::Broker)?;
            }
        }
        Ok(())
    }

    fn try_start(&mut self, at: u64) -> Result<(), StreamError> {
        if self.running.is_some() {
            return Ok(());
        }
        let Some(batch) = self.waiting.pop_front() else {
            return Ok(());
        };
        match self.run_batch(batch.id, &batch.inputs, at) {
            Ok(r) => {
                self.running = Some(r);
                Ok(())
            }
            Err(e) => Err(self.fail(e)),
        }
    }

    /// Builds the per-interval datasets of every stream node. In history
    /// mode only stateless nodes are built and nothing runs.
    fn evaluate(
        &mut self,
        id: u64,
        inputs: &[Vec<Value>],
        history: bool,
    ) -> Result<Vec<Option<Dataset>>, StreamError> {
        let parts = self.engine.slots().len().max(1);
        let window_parents: BTreeSet<usize> = self
            .ctx
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Window { .. }))
            .flat_map(|n| n.parents.iter().copied())
            .collect();
        let mut out: Vec<Option<Dataset>> = Vec::with_capacity(self.ctx.nodes.len());
        let mut created = Vec::new();
        for idx in 0..self.ctx.nodes.len() {
            if history && self.ctx.downstream_of_state(idx) {
                out.push(None);
                continue;
            }
            let node = self.ctx.nodes[idx].clone();
            let parent = |k: usize| out[node.parents[k]];
            let e = &mut self.engine;
            let ds = match &node.kind {
                NodeKind::Input(r) => Some(e.parallelize(inputs[*r].clone(), parts)?),
                NodeKind::Map(f) => {
                    let f = f.clone();
                    parent(0).map(|p| e.map(p, move |c, v| f(c, v)))
                }
                NodeKind::Filter(f) => {
                    let f = f.clone();
                    parent(0).map(|p| e.filter(p, move |c, v| f(c, v)))
                }
                NodeKind::FlatMap(f) => {
                    let f = f.clone();
                    parent(0).map(|p| e.flat_map(p, move |c, v| f(c, v)))
                }
                NodeKind::Transform(f) => match parent(0) {
                    Some(p) => Some(f(e, p)?),
                    None => None,
                },
                NodeKind::Union => match (parent(0), parent(1)) {
                    (Some(a), Some(b)) => Some(e.union(a, b)),
                    _ => None,
                },
                NodeKind::Join(p) => match (parent(0), parent(1)) {
                    (Some(a), Some(b)) => Some(e.join(a, b, p.clone())),
                    _ => None,
                },
                NodeKind::Window { length, slide } => {
                    if !id.is_multiple_of(*slide) {
                        None
                    } else {
                        let from = id.saturating_sub(length - 1).max(1);
                        let src = node.parents[0];
                        let mut parts_in: Vec<Dataset> = (from..id)
                            .filter_map(|k| self.history.get(&(src, k)).copied())
                            .collect();
                        if let Some(cur) = parent(0) {
                            parts_in.push(cur);
                        }
                        if parts_in.is_empty() {
                            Some(e.parallelize(Vec::new(), 1)?)
                        } else {
                            Some(e.union_all(&parts_in))
                        }
                    }
                }
                NodeKind::State { op, update, spec } => match parent(0) {
                    Some(p) => {
                        let prev = self
                            .states
                            .get(op)
                            .cloned()
                            .unwrap_or_else(|| empty_state(spec.partitions));
                        let ds = e.keyed_state(
                            p,
                            StateOp {
                                prev: Arc::new(prev),
                                update: update.clone(),
                                batch_time_ms: id * self.interval,
                                ttl_ms: spec.ttl_ms,
                            },
                        );
                        Some(e.persist(ds))
                    }
                    None => None,
                },
                NodeKind::EmitState => parent(0).map(|p| {
                    e.flat_map(p, |_, v| {
                        let r = v.downcast::<StateRecord>().expect("state record");
                        r.entry
                            .as_ref()
                            .map(|en| vec![Value::pair(r.key.clone(), en.state.clone())])
                            .unwrap_or_default()
                    })
                }),
                NodeKind::Emit => parent(0).map(|p| {
                    e.flat_map(p, |_, v| {
                        v.downcast::<StateRecord>()
                            .expect("state record")
                            .emit
                            .clone()
                    })
                }),
            };
            if let Some(d) = ds {
                created.push(d);
                if window_parents.contains(&idx) {
                    let d = self.engine.persist(d);
                    self.history.insert((idx, id), d);
                }
            }
            out.push(ds);
        }
        self.batch_datasets.entry(id).or_default().extend(created);
        Ok(out)
    }

    fn run_batch(
        &mut self,
        id: u64,
        inputs: &[Vec<Value>],
        at: u64,
    ) -> Result<Running, StreamError> {
        self.engine.set_time(id * self.interval);
        if self.state_lost {
            for ds in core::mem::take(&mut self.state_datasets) {
                self.engine.recover_cached(ds)?;
            }
            self.state_lost = false;
        }
        let nodes = self.evaluate(id, inputs, false)?;
        let mut states = Vec::new();
        let mut persisted = Vec::new();
        for (idx, node) in self.ctx.nodes.iter().enumerate() {
            if let (NodeKind::State { op, .. }, Some(ds)) = (&node.kind, nodes[idx]) {
                let parts = self.engine.collect_partitions(ds)?;
                let snapshot: OperatorState = parts
                    .iter()
                    .map(|recs| {
                        Arc::new(
                            recs.iter()
                                .filter_map(|r| {
                                    let r = r.downcast::<StateRecord>()?;
                                    r.entry.clone().map(|en| (r.key.clone(), en))
                                })
                                .collect(),
                        )
                    })
                    .collect();
                states.push((*op, snapshot));
                persisted.push(ds);
            }
        }
        let mut outputs = Vec::new();
        for (o, spec) in self.ctx.outputs.iter().enumerate() {
            if let Some(ds) = nodes[spec.node] {
                let ds = self.engine.persist(ds);
                outputs.push((o, self.engine.collect(ds)?));
                persisted.push(ds);
            }
        }
        let cost = self.engine.take_cost();
        let processing = cost.div_ceil(1000).max(1);
        Ok(Running {
            id,
            start: at,
            end: at + processing,
            input_count: inputs.iter().map(|v| v.len() as u64).sum(),
            waiting_at_start: self.waiting.len(),
            outputs,
            states,
            persisted,
        })
    }

    fn complete(&mut self, services: &mut Services) -> Result<(), StreamError> {
        let Some(run) = self.running.take() else {
            return Ok(());
        };
        for (o, data) in &run.outputs {
            let f = self.ctx.outputs[*o].f.clone();
            let mut attempt = 0;
            loop {
                attempt += 1;
                let mut oc = OutputContext {
                    batch_id: run.id,
                    batch_time_ms: run.id * self.interval,
                    services,
                };
                match f(&mut oc, data) {
                    Ok(()) => break,
                    Err(reason) if attempt >= self.config.max_output_attempts => {
                        return Err(self.fail(StreamError::OutputFailed {
                            batch_id: run.id,
                            reason,
                        }));
                    }
                    Err(_) => {}
                }
            }
        }
        for (op, st) in run.states {
            self.states.insert(op, st);
        }
        self.state_datasets = run
            .persisted
            .iter()
            .copied()
            .filter(|d| self.engine.kind(*d) == Some(crate::engine::OpKind::KeyedState))
            .collect();
        self.last_batch = run.id;
        self.counters.processed += run.input_count;
        let stats = BatchStats {
            batch_id: run.id,
            batch_time_ms: run.id * self.interval,
            input_count: run.input_count,
            start_ms: run.start,
            end_ms: run.end,
            processing_ms: run.end - run.start,
            scheduling_delay_ms: run.start.saturating_sub(run.id * self.interval),
            waiting_batches: run.waiting_at_start,
        };
        self.completed.push(stats);
        self.history_stats.push(stats);
        if self.config.checkpointing
            && (run.id * self.interval).is_multiple_of(self.config.checkpoint_period_ms)
        {
            self.checkpoint(run.id * self.interval, services)?;
        }
        self.collect_garbage(run.id);
        Ok(())
    }

    fn checkpoint(&mut self, ts: u64, services: &mut Services) -> Result<(), StreamError> {
        let last = self.last_batch;
        let hw = self.seq_by_interval.range(..=last).map(|(_, s)| *s).max();
        if let Some(hw) = hw {
            self.wal_high_water = self.wal_high_water.max(hw);
        }
        self.seq_by_interval = self.seq_by_interval.split_off(&(last + 1));
        let image = CheckpointImage {
            checkpoint_ts: ts,
            last_batch: last,
            wal_high_water: self.wal_high_water,
            states: self.states.clone(),
        };
        if let Err(e) = services.durable.write_checkpoint(&image) {
            return Err(self.fail(StreamError::CheckpointWriteFailed(e)));
        }
        self.counters.checkpoints += 1;
        if self.config.wal {
            // Keep what windows ending after this checkpoint still need.
            let keep_from = (last + 1).saturating_sub(self.max_window - 1).max(1);
            let cutoff = (keep_from - 1) * self.interval;
            services
                .durable
                .wal_truncate_before(cutoff)
                .map_err(StreamError::Storage)?;
            self.wal_ids.retain(|_, ts| *ts >= cutoff);
        }
        Ok(())
    }

    fn collect_garbage(&mut self, done: u64) {
        let keep_from = (done + 1).saturating_sub(self.max_window.max(1));
        let old: Vec<u64> = self
            .batch_datasets
            .range(..keep_from)
            .map(|(k, _)| *k)
            .collect();
        for k in old {
            if let Some(ds) = self.batch_datasets.remove(&k) {
                self.engine.remove_datasets(&ds);
            }
        }
        self.history.retain(|(_, k), _| *k >= keep_from);
    }

    /// A worker died at `t`. Call after advancing to `t`.
    pub fn on_worker_lost(
        &mut self,
        worker: WorkerId,
        t: u64,
        services: &mut Services,
    ) -> Result<(), StreamError> {
        if !self.workers.remove(&worker) {
            return Ok(());
        }
        self.slots.retain(|w| *w != worker);
        self.engine.remove_worker(worker);
        for i in 0..self.receivers.len() {
            if self.receivers[i].worker == Some(worker) {
                self.crash_receiver(i, t, services)?;
                let slots = self.engine.slots().to_vec();
                let Some(&w) = slots.first() else {
                    return Err(self.fail(StreamError::NoFreeCore {
                        slots: 0,
                        receivers: self.receivers.len(),
                    }));
                };
                let mut rest = slots;
                rest.remove(0);
                self.engine.set_slots(rest);
                self.receivers[i] = Receiver {
                    worker: Some(w),
                    started_at: t + self.config.receiver_restart_ms,
                };
            }
        }
        match &mut self.running {
            Some(run) if run.start <= t && t < run.end => {
                let before = self.engine.metrics().stages_resubmitted;
                let _ = self.engine.take_cost();
                for ds in run.persisted.clone() {
                    if let Err(e) = self.engine.recover_cached(ds) {
                        return Err(self.fail(e.into()));
                    }
                }
                let cost = self.engine.take_cost().div_ceil(1000);
                let run = self.running.as_mut().expect("running batch");
                run.end = run.end.max(t + self.config.detection_delay_ms + cost);
                self.counters.recomputed_stages +=
                    self.engine.metrics().stages_resubmitted - before;
            }
            _ => self.state_lost = true,
        }
        Ok(())
    }

    /// Receiver `i` dies at `t`: whatever it pulled since the last block is
    /// unacknowledged (reliable) or gone (auto-ack).
    fn crash_receiver(
        &mut self,
        i: usize,
        t: u64,
        services: &mut Services,
    ) -> Result<(), StreamError> {
        let r = &self.receivers[i];
        if r.worker.is_none() || r.started_at >= t || t == 0 {
            return Ok(());
        }
        let spec = &self.ctx.receivers[i];
        loop {
            let env = if spec.reliable {
                services.broker.consume(&spec.group, &spec.topic, t - 1)
            } else {
                services
                    .broker
                    .consume_auto_ack(&spec.group, &spec.topic, t - 1)
            }
            .map_err(StreamError::Broker)?;
            match env {
                Some(_) if !spec.reliable => self.counters.lost_in_receiver += 1,
                Some(_) => {}
                None => break,
            }
        }
        self.receivers[i].worker = None;
        Ok(())
    }

    /// The driver dies at `t`; receivers die with it. Call after advancing
    /// to `t`. The application must not be used afterwards.
    pub fn kill(&mut self, t: u64, services: &mut Services) -> Result<(), StreamError> {
        for i in 0..self.receivers.len() {
            self.crash_receiver(i, t, services)?;
        }
        self.failed = Some(StreamError::DriverLost);
        Ok(())
    }
}

fn dead_letter_json(id: MessageId, reason: &str) -> String {
    let mut m = serde_json::Map::new();
    m.insert("message_id".into(), serde_json::Value::from(id.0));
    m.insert("error".into(), serde_json::Value::from(reason));
    serde_json::Value::Object(m).to_string()
}

use alloc::string::ToString;
