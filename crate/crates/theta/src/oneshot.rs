//! Runs the recommendation pipeline once over a recorded set of readings.

use std::sync::Arc;

use theta_core::cis::{
    build_pipeline, CisServices, CisTopics, NotificationService, NotificationSink, PriceCache,
    PriceEvent, PriceHistory, RecommendationMessage, RecommenderConfig, StationIndex,
    VehicleReading,
};
use theta_core::engine::WorkerId;
use theta_core::stream::{StreamConfig, StreamingApp, StreamingContext};
use theta_core::theta::Services;

use crate::error::Result;
use crate::http::HttpPriceSource;

/// Where current prices come from.
pub enum PriceFeed {
    /// Straight from the price history at the reading's time.
    History,
    /// The live price API behind a TTL cache.
    Http(String),
}

pub fn cis_from_files(
    stations: Vec<theta_core::cis::GasStation>,
    events: Vec<PriceEvent>,
    feed: PriceFeed,
    config: RecommenderConfig,
) -> Result<CisServices> {
    config.validate()?;
    let history = Arc::new(PriceHistory::from_events(events));
    let prices: Arc<dyn theta_core::cis::PriceLookup> = match feed {
        PriceFeed::History => history.clone(),
        PriceFeed::Http(url) => Arc::new(PriceCache::new(
            HttpPriceSource::new(&url),
            config.price_cache_ttl_ms(),
        )),
    };
    Ok(CisServices {
        index: Arc::new(StationIndex::build(stations)?),
        prices,
        history,
        config,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OneShot {
    pub recommendations: Vec<RecommendationMessage>,
    pub stored: u64,
    pub dead_letters: u64,
    /// Notifications still failing after the retries.
    pub undelivered: u64,
}

const SLACK_MS: u64 = 100;
const MAX_IDLE_S: u64 = 600;
const PUSH_ROUNDS: usize = 5;

/// Replays `readings` in timestamp order on a local two-worker app, with
/// virtual time starting at the earliest reading. Notifications go to
/// `sink` when one is given.
pub fn run_pipeline(
    cis: &CisServices,
    readings: &[VehicleReading],
    sink: Option<&mut dyn NotificationSink>,
) -> Result<OneShot> {
    let topics = CisTopics::default();
    let mut svc = Services::new();
    svc.broker.subscribe("cli", &topics.recommendations);
    let mut push = NotificationService::new(&mut svc.broker, "push", &topics.recommendations);
    let mut ctx = StreamingContext::new(1000)?;
    build_pipeline(&mut ctx, cis, &topics)?;
    let slots = vec![WorkerId(0), WorkerId(1), WorkerId(0), WorkerId(1)];
    let mut app = StreamingApp::start(ctx, StreamConfig::default(), slots, 0, &mut svc)?;

    let mut order: Vec<&VehicleReading> = readings.iter().collect();
    order.sort_by_key(|r| r.timestamp);
    let t0 = order.first().map_or(0, |r| r.timestamp);
    let mut end = 0;
    for r in &order {
        let ts = (r.timestamp - t0) as u64 + SLACK_MS;
        svc.broker
            .publish(&topics.vehicles, r.to_json().as_bytes(), ts);
        end = ts;
    }
    let mut t = end + 2000;
    app.advance_to(t, &mut svc)?;
    for _ in 0..MAX_IDLE_S {
        let c = app.counters();
        if c.processed + c.dead_letters >= order.len() as u64
            && app.waiting_batches() == 0
            && !app.is_running_batch()
        {
            break;
        }
        t += 1000;
        app.advance_to(t, &mut svc)?;
    }
    let mut undelivered = 0;
    if let Some(sink) = sink {
        // Failed pushes come back once their visibility deadline passes.
        for _ in 0..PUSH_ROUNDS {
            push.poll(&mut svc.broker, sink, t)?;
            let g = svc.broker.stats("push", &topics.recommendations);
            undelivered = g.pending + g.unacked;
            if undelivered == 0 {
                break;
            }
            t += svc.broker.visibility_ms() + 1;
        }
    }
    let mut out = OneShot {
        undelivered,
        stored: svc
            .store
            .len(topics.raw_collection.as_deref().unwrap_or_default()),
        dead_letters: app.counters().dead_letters,
        ..OneShot::default()
    };
    while let Some(env) = svc
        .broker
        .consume_auto_ack("cli", &topics.recommendations, u64::MAX)?
    {
        if let Ok(m) = serde_json::from_slice(&env.payload) {
            out.recommendations.push(m);
        }
    }
    Ok(out)
}
