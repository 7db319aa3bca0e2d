//! Scaling and failover experiments against the simulated cluster.

use std::collections::BTreeMap;
use std::sync::Arc;

use theta_core::cis::{
    build_pipeline, CisServices, CisTopics, FuelKind, GasStation, PriceCache, PriceEvent,
    PriceHistory, RecommenderConfig, StationIndex, StubPriceSource,
};
use theta_core::cluster::{AppId, AppMetrics, AppSpec, Cluster, ClusterConfig};
use theta_core::engine::CostModel;
use theta_core::stream::{BatchStats, StreamConfig, StreamingContext};
use theta_core::theta::Services;

use super::plan::{to_fault_plan, FaultKind, FaultStep};
use super::report::{ReportRow, RunReport};
use super::scenario::{Generator, LoadScenario, BASE_EPOCH_MS};
use crate::data::{random_price_history, random_stations, Region};
use crate::error::{Error, Result};

pub const BATCH_INTERVAL_MS: u64 = 1000;
pub const DEFAULT_STATIONS: usize = 30_000;
pub const HISTORY_DAYS: u32 = 14;

/// Station search inputs around `now`: index, cached live prices taken from
/// the history, and the history itself.
pub fn cis_services(
    stations: Vec<GasStation>,
    events: Vec<PriceEvent>,
    now: i64,
) -> Result<CisServices> {
    let config = RecommenderConfig::default();
    let history = Arc::new(PriceHistory::from_events(events));
    let live = StubPriceSource::from_history(&history, now);
    Ok(CisServices {
        index: Arc::new(StationIndex::build(stations)?),
        prices: Arc::new(PriceCache::new(live, config.price_cache_ttl_ms())),
        history,
        config,
    })
}

/// The synthetic station corpus used by every experiment.
pub fn synthetic_world(n_stations: usize, seed: u64) -> Result<CisServices> {
    let stations = random_stations(n_stations, Region::default(), seed);
    let events = random_price_history(
        &stations,
        &[FuelKind::E5],
        BASE_EPOCH_MS,
        HISTORY_DAYS,
        seed,
    );
    cis_services(stations, events, BASE_EPOCH_MS)
}

#[derive(Clone)]
pub struct DeploymentConfig {
    pub scenario: LoadScenario,
    pub workers: u32,
    pub slots_per_worker: u32,
    pub seed: u64,
    pub stream: StreamConfig,
    pub driver_restart_ms: u64,
}

impl DeploymentConfig {
    pub fn new(scenario: LoadScenario, workers: u32, seed: u64) -> Self {
        DeploymentConfig {
            scenario,
            workers,
            slots_per_worker: 2,
            seed,
            stream: StreamConfig {
                cost: CostModel::default(),
                ..StreamConfig::default()
            },
            driver_restart_ms: ClusterConfig::default().driver_restart_ms,
        }
    }
}

/// One CIS application on a simulated cluster, fed second by second.
pub struct Deployment {
    cluster: Cluster,
    app: AppId,
    gen: Generator,
    now: u64,
    report: RunReport,
    sent: Vec<String>,
    keep_sent: bool,
}

impl Deployment {
    pub fn start(cfg: &DeploymentConfig, cis: &CisServices) -> Result<Self> {
        let cluster_cfg = ClusterConfig {
            n_workers: cfg.workers,
            slots_per_worker: cfg.slots_per_worker,
            // A single worker cannot hold a second block replica; the
            // write-ahead log keeps received data durable instead.
            replication_factor: ClusterConfig::default()
                .replication_factor
                .min(cfg.workers as usize),
            seed: cfg.seed,
            driver_restart_ms: cfg.driver_restart_ms,
            ..ClusterConfig::default()
        };
        let mut cluster = Cluster::start(cluster_cfg, Services::new())?;
        let cis = cis.clone();
        let spec = AppSpec::new("cis", cfg.stream.clone(), move || {
            let mut ctx = StreamingContext::new(BATCH_INTERVAL_MS).expect("valid batch interval");
            build_pipeline(&mut ctx, &cis, &CisTopics::default()).expect("pipeline wiring");
            ctx
        });
        let app = cluster.submit(spec)?;
        Ok(Deployment {
            cluster,
            app,
            gen: Generator::new(cfg.scenario, cfg.seed),
            now: 0,
            report: RunReport::default(),
            sent: Vec::new(),
            keep_sent: false,
        })
    }

    /// Keeps a copy of every payload sent from now on.
    pub fn record_sent(&mut self) {
        self.keep_sent = true;
    }

    pub fn set_fault_plan(&mut self, steps: &[FaultStep]) -> Result<()> {
        self.cluster.set_fault_plan(to_fault_plan(steps)?);
        Ok(())
    }

    /// Publishes one second of traffic and runs the cluster through it.
    pub fn tick(&mut self, rate: u32) -> Result<ReportRow> {
        let start = self.now;
        let msgs = if rate > 0 {
            self.gen.second(start, rate)
        } else {
            Vec::new()
        };
        let broker = &mut self.cluster.services_mut().broker;
        for m in &msgs {
            broker.publish("vehicle-data", m.payload.as_bytes(), m.ts);
        }
        if self.keep_sent {
            self.sent.extend(msgs.into_iter().map(|m| m.payload));
        }
        self.now = start + 1000;
        self.cluster.advance_to(self.now)?;
        let m = self.metrics();
        let row = ReportRow {
            ts: self.now,
            target_rate: rate,
            received: m.received,
            processed: m.processed,
            batch_ms: m.batches.last().map_or(0, |b| b.processing_ms),
            waiting_batches: m.waiting_batches,
            workers: self.cluster.alive_workers(),
        };
        self.report.push(row);
        Ok(row)
    }

    /// Idles until everything sent is processed, for at most `max_s` seconds.
    pub fn drain(&mut self, max_s: u64) -> Result<()> {
        for _ in 0..max_s {
            let m = self.metrics();
            if m.processed >= self.gen.sent() && m.waiting_batches == 0 {
                break;
            }
            self.tick(0)?;
        }
        Ok(())
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn sent(&self) -> u64 {
        self.gen.sent()
    }

    pub fn sent_payloads(&self) -> &[String] {
        &self.sent
    }

    pub fn metrics(&self) -> AppMetrics {
        self.cluster
            .app_metrics(self.app)
            .expect("submitted application")
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn report(&self) -> &RunReport {
        &self.report
    }

    pub fn into_report(self) -> RunReport {
        self.report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateSchedule {
    pub start: u32,
    pub step: u32,
    pub max: u32,
    pub dwell_s: u64,
}

impl Default for RateSchedule {
    fn default() -> Self {
        RateSchedule {
            start: 500,
            step: 500,
            max: 10_000,
            dwell_s: 30,
        }
    }
}

impl RateSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.start == 0 || self.step == 0 || self.dwell_s == 0 || self.max < self.start {
            return Err(Error::Invalid(
                "rates and dwell must be positive, with start <= max".into(),
            ));
        }
        Ok(())
    }

    pub fn rates(&self) -> Vec<u32> {
        (self.start..=self.max)
            .step_by(self.step as usize)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub rate: u32,
    pub waiting_start: usize,
    pub waiting_end: usize,
    pub growing: bool,
}

/// Growth beyond one batch over a dwell means the rate is not sustained;
/// a single batch of slack absorbs phase jitter between ticks and batches.
pub const GROWTH_TOLERANCE: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScalingRun {
    pub workers: u32,
    pub steps: Vec<StepOutcome>,
    /// Highest rate whose waiting batches did not grow; 0 if none.
    pub max_rate: u32,
    pub report: RunReport,
}

/// Steps the rate until the first step whose backlog grows.
pub fn run_scaling(
    cfg: &DeploymentConfig,
    cis: &CisServices,
    schedule: &RateSchedule,
) -> Result<ScalingRun> {
    schedule.validate()?;
    let mut d = Deployment::start(cfg, cis)?;
    let mut steps = Vec::new();
    let mut max_rate = 0;
    for rate in schedule.rates() {
        let waiting_start = d.metrics().waiting_batches;
        let mut waiting_end = waiting_start;
        for _ in 0..schedule.dwell_s {
            waiting_end = d.tick(rate)?.waiting_batches;
        }
        let growing = waiting_end > waiting_start + GROWTH_TOLERANCE;
        steps.push(StepOutcome {
            rate,
            waiting_start,
            waiting_end,
            growing,
        });
        if growing {
            break;
        }
        max_rate = rate;
    }
    Ok(ScalingRun {
        workers: cfg.workers,
        steps,
        max_rate,
        report: d.into_report(),
    })
}

pub fn run_scaling_experiment(
    worker_counts: &[u32],
    cfg: &DeploymentConfig,
    cis: &CisServices,
    schedule: &RateSchedule,
) -> Result<Vec<ScalingRun>> {
    worker_counts
        .iter()
        .map(|&w| {
            run_scaling(
                &DeploymentConfig {
                    workers: w,
                    ..cfg.clone()
                },
                cis,
                schedule,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Verdict {
    pub checks: Vec<Check>,
}

impl Verdict {
    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

#[derive(Clone)]
pub struct FailoverConfig {
    pub deployment: DeploymentConfig,
    pub rate: u32,
    pub duration_s: u64,
    /// Upper bound on the idle time after the load stops.
    pub drain_s: u64,
    pub plan: Vec<FaultStep>,
}

#[derive(Debug, Clone)]
pub struct FailoverRun {
    pub report: RunReport,
    pub verdict: Verdict,
    pub metrics: AppMetrics,
    pub sent: u64,
}

fn drive(
    cfg: &FailoverConfig,
    cis: &CisServices,
    plan: &[FaultStep],
    keep: bool,
) -> Result<Deployment> {
    let mut d = Deployment::start(&cfg.deployment, cis)?;
    if keep {
        d.record_sent();
    }
    d.set_fault_plan(plan)?;
    for _ in 0..cfg.duration_s {
        d.tick(cfg.rate)?;
    }
    d.drain(cfg.drain_s)?;
    Ok(d)
}

fn median(mut xs: Vec<u64>) -> Option<u64> {
    xs.sort_unstable();
    (!xs.is_empty()).then(|| xs[xs.len() / 2])
}

/// The batch that was running when `t` came, if any.
fn active_batch(batches: &[BatchStats], t: u64) -> Option<&BatchStats> {
    batches.iter().find(|b| b.start_ms <= t && t < b.end_ms)
}

/// Runs the plan under load and checks delivery and the fault signatures.
pub fn run_failover(cfg: &FailoverConfig, cis: &CisServices) -> Result<FailoverRun> {
    let d = drive(cfg, cis, &cfg.plan, true)?;
    let m = d.metrics();
    let mut v = Verdict::default();

    let mut sent: BTreeMap<&str, i64> = BTreeMap::new();
    for p in d.sent_payloads() {
        *sent.entry(p.as_str()).or_default() += 1;
    }
    let stored = d.cluster().services().store.scan(
        &CisTopics::default().raw_collection.expect("raw collection"),
        &|_| true,
    );
    let mut balance = sent;
    for r in &stored {
        let p = std::str::from_utf8(&r.payload).unwrap_or("");
        *balance.entry(p).or_default() -= 1;
    }
    let missing: i64 = balance.values().filter(|c| **c > 0).sum();
    let extra: i64 = -balance.values().filter(|c| **c < 0).sum::<i64>();
    v.check(
        "exactly_once",
        missing == 0 && extra == 0 && d.sent() == m.processed,
        format!(
            "sent {} processed {} missing {missing} duplicated {extra}",
            d.sent(),
            m.processed
        ),
    );
    if let Some(f) = &m.failed {
        v.check("application_alive", false, f.clone());
    }
    if d.cluster().metrics_snapshot().supervision_lost {
        v.check(
            "supervision",
            false,
            "no master left to restart the driver".into(),
        );
    }

    for step in &cfg.plan {
        match step.event {
            FaultKind::KillWorker => {
                let before = median(
                    m.batches
                        .iter()
                        .filter(|b| b.end_ms <= step.t_ms)
                        .map(|b| b.processing_ms)
                        .collect(),
                );
                let active = active_batch(&m.batches, step.t_ms);
                let (ok, detail) = match (active, before) {
                    (Some(a), Some(med)) => (
                        a.processing_ms >= 3 * med && m.recomputed_stages >= 1,
                        format!(
                            "batch {} took {} ms against a median of {med} ms; {} stages recomputed",
                            a.batch_id, a.processing_ms, m.recomputed_stages
                        ),
                    ),
                    (None, _) => (false, format!("no batch was running at {} ms", step.t_ms)),
                    (_, None) => (false, format!("no batch finished before {} ms", step.t_ms)),
                };
                v.check("worker_kill", ok, detail);
            }
            FaultKind::KillMaster => {
                let rest: Vec<FaultStep> = cfg
                    .plan
                    .iter()
                    .copied()
                    .filter(|s| s.event != FaultKind::KillMaster)
                    .collect();
                let twin = drive(cfg, cis, &rest, false)?.metrics();
                let same = twin.batches == m.batches;
                v.check(
                    "master_kill",
                    same,
                    format!(
                        "{} batches, identical to the twin run: {same}",
                        m.batches.len()
                    ),
                );
            }
            FaultKind::KillDriver => {
                let rows = &d.report().rows;
                let deltas = d.report().received_deltas();
                let after = rows
                    .iter()
                    .position(|r| r.ts > step.t_ms + 1000)
                    .unwrap_or(rows.len());
                let gap = (after..rows.len()).find(|&i| deltas[i] == 0);
                let burst =
                    gap.and_then(|g| (g..rows.len()).find(|&i| deltas[i] > u64::from(cfg.rate)));
                let detail = match (gap, burst) {
                    (Some(g), Some(b)) => format!(
                        "no input at {} ms, then {} messages at {} ms",
                        rows[g].ts, deltas[b], rows[b].ts
                    ),
                    (Some(g), None) => format!("gap at {} ms but no catch-up burst", rows[g].ts),
                    _ => "no throughput gap after the kill".to_string(),
                };
                v.check("driver_kill", gap.is_some() && burst.is_some(), detail);
            }
        }
    }
    Ok(FailoverRun {
        report: d.report().clone(),
        verdict: v,
        metrics: m,
        sent: d.sent(),
    })
}
