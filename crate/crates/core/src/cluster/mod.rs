//! Simulated standalone cluster: masters with a leader, workers offering
//! task slots, and supervised drivers, all on the virtual clock.
//!
//! Faults are crash-stop. A killed worker takes its slots, cached partitions
//! and receivers with it. A killed leader master is replaced by the lowest
//! alive master id. A killed driver is restarted by the masters after
//! `driver_restart_ms` (plus link delay) and recovers from its checkpoint and
//! write-ahead log; without an alive master nobody restarts it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::WorkerId;
use crate::stream::{
    AppCounters, BatchStats, StreamConfig, StreamError, StreamingApp, StreamingContext,
};
use crate::theta::Services;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterConfig {
    pub n_workers: u32,
    pub slots_per_worker: u32,
    pub n_masters: u32,
    pub replication_factor: usize,
    pub seed: u64,
    /// Upper bound of the seeded per-message link delay.
    pub link_delay_ms: u64,
    /// Time a master needs to relaunch a dead driver.
    pub driver_restart_ms: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            n_workers: 2,
            slots_per_worker: 2,
            n_masters: 3,
            replication_factor: 2,
            seed: 0,
            link_delay_ms: 0,
            driver_restart_ms: 5_000,
        }
    }
}

impl ClusterConfig {
    pub fn total_slots(&self) -> usize {
        (self.n_workers * self.slots_per_worker) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeId {
    Master(u32),
    Worker(u32),
    Driver(AppId),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Master(i) => write!(f, "master-{i}"),
            NodeId::Worker(i) => write!(f, "worker-{i}"),
            NodeId::Driver(a) => write!(f, "driver-{}", a.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AppId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Master { leader: bool },
    Driver,
    Worker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimNode {
    pub id: NodeId,
    pub role: Role,
    pub alive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FaultEvent {
    KillWorker(u32),
    KillMaster(u32),
    /// Kills the driver of the given application.
    KillDriver(AppId),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClusterError {
    #[error("invalid cluster configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("{available} free slots cannot host {receivers} receivers plus one task slot")]
    InsufficientSlots { available: usize, receivers: usize },
    #[error("{0} is already dead")]
    AlreadyDead(NodeId),
    #[error("{0} does not exist")]
    UnknownNode(NodeId),
    #[error("fault times must not decrease")]
    UnorderedPlan,
    #[error(transparent)]
    Stream(#[from] StreamError),
}

/// Faults ordered by virtual time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    events: Vec<(u64, FaultEvent)>,
}

impl FaultPlan {
    pub fn new(events: Vec<(u64, FaultEvent)>) -> Result<Self, ClusterError> {
        if events.windows(2).any(|w| w[0].0 > w[1].0) {
            return Err(ClusterError::UnorderedPlan);
        }
        Ok(FaultPlan { events })
    }

    pub fn events(&self) -> &[(u64, FaultEvent)] {
        &self.events
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    LeaderElected(u32),
    WorkerLost(u32),
    MasterLost(u32),
    DriverLost(AppId),
    DriverRestarted(AppId),
    SupervisionLost(AppId),
    AppFailed(AppId, String),
    Batch {
        app: AppId,
        batch_id: u64,
        start_ms: u64,
        end_ms: u64,
        input: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub t: u64,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppMetrics {
    /// First completion of every batch id, in completion order.
    pub batches: Vec<BatchStats>,
    pub received: u64,
    /// Records of distinct committed batches.
    pub processed: u64,
    pub recomputed_stages: u64,
    pub dead_letters: u64,
    pub lost_in_receiver: u64,
    pub replication_failures: u64,
    pub checkpoints: u64,
    pub driver_restarts: u64,
    pub waiting_batches: usize,
    pub driver_alive: bool,
    pub failed: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterMetrics {
    pub apps: Vec<AppMetrics>,
    pub driver_restarts: u64,
    pub leader_elections: u64,
    pub recomputed_stages: u64,
    pub supervision_lost: bool,
}

/// Application factory; called on submit and on every driver restart.
pub type AppFactory = Arc<dyn Fn() -> StreamingContext + Send + Sync>;

pub struct AppSpec {
    pub name: String,
    pub factory: AppFactory,
    pub config: StreamConfig,
    /// Slots to claim; `None` takes every free slot.
    pub cores: Option<usize>,
    pub supervise: bool,
}

impl AppSpec {
    pub fn new<F>(name: &str, config: StreamConfig, factory: F) -> Self
    where
        F: Fn() -> StreamingContext + Send + Sync + 'static,
    {
        AppSpec {
            name: String::from(name),
            factory: Arc::new(factory),
            config,
            cores: None,
            supervise: true,
        }
    }
}

struct AppSlot {
    spec: AppSpec,
    slots: Vec<WorkerId>,
    app: Option<StreamingApp>,
    restart_at: Option<u64>,
    base: AppCounters,
    seen: BTreeSet<u64>,
    metrics: AppMetrics,
}

impl AppSlot {
    fn counters(&self) -> AppCounters {
        let c = self.app.as_ref().map(|a| a.counters()).unwrap_or_default();
        add(self.base, c)
    }
}

fn add(a: AppCounters, b: AppCounters) -> AppCounters {
    AppCounters {
        received: a.received + b.received,
        processed: a.processed + b.processed,
        dead_letters: a.dead_letters + b.dead_letters,
        duplicates_dropped: a.duplicates_dropped + b.duplicates_dropped,
        replication_failures: a.replication_failures + b.replication_failures,
        lost_in_receiver: a.lost_in_receiver + b.lost_in_receiver,
        recomputed_stages: a.recomputed_stages + b.recomputed_stages,
        checkpoints: a.checkpoints + b.checkpoints,
    }
}

pub struct Cluster {
    config: ClusterConfig,
    masters: Vec<bool>,
    leader: Option<u32>,
    workers: Vec<bool>,
    free: Vec<WorkerId>,
    apps: Vec<AppSlot>,
    services: Services,
    plan: FaultPlan,
    plan_pos: usize,
    now: u64,
    rng: ChaCha8Rng,
    trace: Vec<TraceEntry>,
    leader_elections: u64,
    supervision_lost: bool,
}

impl Cluster {
    pub fn start(config: ClusterConfig, services: Services) -> Result<Self, ClusterError> {
        if config.n_masters == 0 {
            return Err(ClusterError::InvalidConfig(
                "at least one master is required",
            ));
        }
        if config.n_workers == 0 || config.slots_per_worker == 0 {
            return Err(ClusterError::InvalidConfig(
                "workers need at least one slot",
            ));
        }
        // Spread slots over workers so that receivers and tasks mix.
        let mut free = Vec::new();
        for _ in 0..config.slots_per_worker {
            free.extend((0..config.n_workers).map(WorkerId));
        }
        let mut c = Cluster {
            masters: alloc::vec![true; config.n_masters as usize],
            leader: None,
            workers: alloc::vec![true; config.n_workers as usize],
            free,
            apps: Vec::new(),
            services,
            plan: FaultPlan::default(),
            plan_pos: 0,
            now: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            trace: Vec::new(),
            leader_elections: 0,
            supervision_lost: false,
            config,
        };
        c.elect();
        // Only failovers count as elections.
        c.leader_elections = 0;
        Ok(c)
    }

    fn elect(&mut self) {
        self.leader = self.masters.iter().position(|a| *a).map(|i| i as u32);
        if let Some(l) = self.leader {
            self.leader_elections += 1;
            self.trace(TraceEvent::LeaderElected(l));
        }
    }

    fn trace(&mut self, event: TraceEvent) {
        self.trace.push(TraceEntry { t: self.now, event });
    }

    fn link_delay(&mut self) -> u64 {
        match self.config.link_delay_ms {
            0 => 0,
            d => self.rng.next_u64() % (d + 1),
        }
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn leader(&self) -> Option<u32> {
        self.leader
    }

    pub fn nodes(&self) -> Vec<SimNode> {
        let mut out: Vec<SimNode> = self
            .masters
            .iter()
            .enumerate()
            .map(|(i, alive)| SimNode {
                id: NodeId::Master(i as u32),
                role: Role::Master {
                    leader: self.leader == Some(i as u32),
                },
                alive: *alive,
            })
            .collect();
        out.extend(self.workers.iter().enumerate().map(|(i, alive)| SimNode {
            id: NodeId::Worker(i as u32),
            role: Role::Worker,
            alive: *alive,
        }));
        out.extend(self.apps.iter().enumerate().map(|(i, a)| SimNode {
            id: NodeId::Driver(AppId(i as u32)),
            role: Role::Driver,
            alive: a.app.is_some(),
        }));
        out
    }

    pub fn alive_workers(&self) -> usize {
        self.workers.iter().filter(|a| **a).count()
    }

    pub fn free_slots(&self) -> usize {
        self.free.len()
    }

    pub fn services(&self) -> &Services {
        &self.services
    }

    pub fn services_mut(&mut self) -> &mut Services {
        &mut self.services
    }

    pub fn trace_log(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn app(&self, id: AppId) -> Option<&StreamingApp> {
        self.apps.get(id.0 as usize).and_then(|a| a.app.as_ref())
    }

    /// Workers that run executors of the application.
    pub fn executors(&self, id: AppId) -> Vec<WorkerId> {
        let mut w: Vec<WorkerId> = self
            .apps
            .get(id.0 as usize)
            .map(|a| a.slots.clone())
            .unwrap_or_default();
        w.sort();
        w.dedup();
        w
    }

    pub fn set_fault_plan(&mut self, plan: FaultPlan) {
        self.plan = plan;
        self.plan_pos = 0;
    }

    /// Launches the driver at the current time on the claimed slots.
    pub fn submit(&mut self, spec: AppSpec) -> Result<AppId, ClusterError> {
        let ctx = (spec.factory)();
        let receivers = ctx.receivers().len();
        let want = spec.cores.unwrap_or(self.free.len()).min(self.free.len());
        if want <= receivers {
            return Err(ClusterError::InsufficientSlots {
                available: self.free.len(),
                receivers,
            });
        }
        let slots: Vec<WorkerId> = self.free.drain(..want).collect();
        let config = StreamConfig {
            replication_factor: self.config.replication_factor,
            ..spec.config.clone()
        };
        let app = StreamingApp::start(ctx, config, slots.clone(), self.now, &mut self.services)?;
        let id = AppId(self.apps.len() as u32);
        self.apps.push(AppSlot {
            spec,
            slots,
            app: Some(app),
            restart_at: None,
            base: AppCounters::default(),
            seen: BTreeSet::new(),
            metrics: AppMetrics {
                driver_alive: true,
                ..AppMetrics::default()
            },
        });
        Ok(id)
    }

    /// Runs the simulation up to `t`, applying planned faults and driver
    /// restarts on the way.
    pub fn advance_to(&mut self, t: u64) -> Result<(), ClusterError> {
        loop {
            let fault = self
                .plan
                .events
                .get(self.plan_pos)
                .map(|e| e.0)
                .filter(|x| *x <= t);
            let restart = self
                .apps
                .iter()
                .filter_map(|a| a.restart_at)
                .filter(|x| *x <= t)
                .min();
            let next = match (fault, restart) {
                (None, None) => break,
                (a, b) => a.unwrap_or(u64::MAX).min(b.unwrap_or(u64::MAX)),
            };
            self.run_apps(next);
            if fault == Some(next) {
                let ev = self.plan.events[self.plan_pos].1;
                self.plan_pos += 1;
                self.apply(ev)?;
            } else {
                self.restart_due(next);
            }
        }
        self.run_apps(t);
        Ok(())
    }

    fn run_apps(&mut self, t: u64) {
        self.now = self.now.max(t);
        for i in 0..self.apps.len() {
            let slot = &mut self.apps[i];
            let Some(app) = slot.app.as_mut() else {
                continue;
            };
            if app.failure().is_some() {
                continue;
            }
            let res = app.advance_to(t, &mut self.services);
            self.harvest(i);
            if let Err(e) = res {
                let msg = alloc::format!("{e}");
                self.apps[i].metrics.failed = Some(msg.clone());
                self.trace(TraceEvent::AppFailed(AppId(i as u32), msg));
            }
        }
    }

    fn harvest(&mut self, i: usize) {
        let Some(app) = self.apps[i].app.as_mut() else {
            return;
        };
        let done = app.drain_completed();
        for s in done {
            let slot = &mut self.apps[i];
            if slot.seen.insert(s.batch_id) {
                slot.metrics.processed += s.input_count;
                slot.metrics.batches.push(s);
                self.trace.push(TraceEntry {
                    t: s.end_ms,
                    event: TraceEvent::Batch {
                        app: AppId(i as u32),
                        batch_id: s.batch_id,
                        start_ms: s.start_ms,
                        end_ms: s.end_ms,
                        input: s.input_count,
                    },
                });
            }
        }
    }

    fn restart_due(&mut self, t: u64) {
        for i in 0..self.apps.len() {
            if self.apps[i].restart_at.is_some_and(|r| r <= t) {
                self.apps[i].restart_at = None;
                let slot = &mut self.apps[i];
                let ctx = (slot.spec.factory)();
                let config = StreamConfig {
                    replication_factor: self.config.replication_factor,
                    ..slot.spec.config.clone()
                };
                match StreamingApp::recover(ctx, config, slot.slots.clone(), t, &mut self.services)
                {
                    Ok(app) => {
                        let slot = &mut self.apps[i];
                        slot.app = Some(app);
                        slot.metrics.driver_restarts += 1;
                        slot.metrics.driver_alive = true;
                        self.trace(TraceEvent::DriverRestarted(AppId(i as u32)));
                        self.harvest(i);
                    }
                    Err(e) => {
                        let msg = alloc::format!("{e}");
                        self.apps[i].metrics.failed = Some(msg.clone());
                        self.trace(TraceEvent::AppFailed(AppId(i as u32), msg));
                    }
                }
            }
        }
    }

    /// Applies a fault at the current time. Call after advancing to it.
    pub fn inject(&mut self, event: FaultEvent) -> Result<(), ClusterError> {
        self.apply(event)
    }

    fn apply(&mut self, event: FaultEvent) -> Result<(), ClusterError> {
        let t = self.now;
        match event {
            FaultEvent::KillWorker(w) => {
                let id = NodeId::Worker(w);
                match self.workers.get(w as usize) {
                    None => return Err(ClusterError::UnknownNode(id)),
                    Some(false) => return Err(ClusterError::AlreadyDead(id)),
                    Some(true) => {}
                }
                self.workers[w as usize] = false;
                self.free.retain(|x| x.0 != w);
                self.trace(TraceEvent::WorkerLost(w));
                for i in 0..self.apps.len() {
                    let slot = &mut self.apps[i];
                    if !slot.slots.iter().any(|x| x.0 == w) {
                        continue;
                    }
                    slot.slots.retain(|x| x.0 != w);
                    if let Some(app) = slot.app.as_mut() {
                        if app.failure().is_none() {
                            let res = app.on_worker_lost(WorkerId(w), t, &mut self.services);
                            if let Err(e) = res {
                                let msg = alloc::format!("{e}");
                                self.apps[i].metrics.failed = Some(msg.clone());
                                self.trace(TraceEvent::AppFailed(AppId(i as u32), msg));
                            }
                        }
                    }
                }
            }
            FaultEvent::KillMaster(m) => {
                let id = NodeId::Master(m);
                match self.masters.get(m as usize) {
                    None => return Err(ClusterError::UnknownNode(id)),
                    Some(false) => return Err(ClusterError::AlreadyDead(id)),
                    Some(true) => {}
                }
                self.masters[m as usize] = false;
                self.trace(TraceEvent::MasterLost(m));
                if self.leader == Some(m) {
                    self.elect();
                }
            }
            FaultEvent::KillDriver(a) => {
                let id = NodeId::Driver(a);
                let Some(slot) = self.apps.get_mut(a.0 as usize) else {
                    return Err(ClusterError::UnknownNode(id));
                };
                let Some(mut app) = slot.app.take() else {
                    return Err(ClusterError::AlreadyDead(id));
                };
                let _ = app.kill(t, &mut self.services);
                slot.base = add(slot.base, app.counters());
                slot.metrics.driver_alive = false;
                let supervise = slot.spec.supervise;
                self.trace(TraceEvent::DriverLost(a));
                if supervise && self.leader.is_some() {
                    let at = t + self.config.driver_restart_ms + self.link_delay();
                    self.apps[a.0 as usize].restart_at = Some(at);
                } else {
                    self.supervision_lost = true;
                    self.trace(TraceEvent::SupervisionLost(a));
                }
            }
        }
        Ok(())
    }

    pub fn app_metrics(&self, id: AppId) -> Option<AppMetrics> {
        let slot = self.apps.get(id.0 as usize)?;
        let c = slot.counters();
        let mut m = slot.metrics.clone();
        m.received = c.received;
        m.recomputed_stages = c.recomputed_stages;
        m.dead_letters = c.dead_letters;
        m.lost_in_receiver = c.lost_in_receiver;
        m.replication_failures = c.replication_failures;
        m.checkpoints = c.checkpoints;
        m.waiting_batches = slot.app.as_ref().map_or(0, |a| a.waiting_batches());
        Some(m)
    }

    pub fn metrics_snapshot(&self) -> ClusterMetrics {
        let apps: Vec<AppMetrics> = (0..self.apps.len())
            .filter_map(|i| self.app_metrics(AppId(i as u32)))
            .collect();
        ClusterMetrics {
            driver_restarts: apps.iter().map(|a| a.driver_restarts).sum(),
            recomputed_stages: apps.iter().map(|a| a.recomputed_stages).sum(),
            leader_elections: self.leader_elections,
            supervision_lost: self.supervision_lost,
            apps,
        }
    }

    /// Per-application slot counts, for accounting checks.
    pub fn slot_usage(&self) -> BTreeMap<AppId, usize> {
        self.apps
            .iter()
            .enumerate()
            .map(|(i, a)| (AppId(i as u32), a.slots.len()))
            .collect()
    }
}

impl fmt::Debug for Cluster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Cluster")
            .field("config", &self.config)
            .field("leader", &self.leader)
            .field("now", &self.now)
            .finish_non_exhaustive()
    }
}
