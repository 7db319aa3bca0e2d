//! The gas-station search as a chain of stream processors:
//! source, fuel filter, first appearance, station search, output.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::notify::RecommendationMessage;
use super::prices::{PriceHistory, PriceLookup};
use super::reading::{parse_vehicle_reading, VehicleReading};
use super::recommend::{recommend_counted, RecommendContext, Recommendation, RecommenderConfig};
use super::rtree::StationIndex;
use crate::engine::StateOutcome;
use crate::stream::{ReceiverSpec, StateSpec, StreamingContext};
use crate::theta::{ChainError, OutputProcessor, PreProcessor, TypedSource, TypedStream};
use crate::value::Value;

pub const VEHICLE_TAG: &str = "vehicle";
pub const RECOMMENDATION_TAG: &str = "recommendation";

/// Shared read-only inputs of the station search.
#[derive(Clone)]
pub struct CisServices {
    pub index: Arc<StationIndex>,
    pub prices: Arc<dyn PriceLookup>,
    pub history: Arc<PriceHistory>,
    pub config: RecommenderConfig,
}

/// Broadcast payload: the index itself is shared, never copied or rebuilt.
#[derive(Clone)]
struct IndexHandle(Arc<StationIndex>);

impl PartialEq for IndexHandle {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl fmt::Debug for IndexHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IndexHandle({} stations)", self.0.len())
    }
}

pub fn vehicle_receiver(topic: &str, group: &str) -> ReceiverSpec {
    ReceiverSpec::new(topic, group, true, |_, payload| {
        parse_vehicle_reading(payload).map(Value::object)
    })
}

pub fn vehicle_source(ctx: &mut StreamingContext, topic: &str, group: &str) -> TypedSource {
    TypedSource::new(ctx, vehicle_receiver(topic, group), VEHICLE_TAG)
}

fn reading(v: &Value) -> &VehicleReading {
    v.downcast::<VehicleReading>().expect("vehicle reading")
}

/// Keeps readings whose fuel level is known and strictly below the
/// threshold.
pub fn passes_fuel_filter(r: &VehicleReading, cfg: &RecommenderConfig) -> bool {
    r.fuel_level().is_some_and(|f| f < cfg.fuel_threshold_pct)
}

pub fn fuel_filter(cfg: RecommenderConfig) -> PreProcessor {
    PreProcessor::new("fuel_filter", VEHICLE_TAG, VEHICLE_TAG, move |ctx, s| {
        Ok(ctx.filter(s, move |_, v| passes_fuel_filter(reading(v), &cfg)))
    })
}

/// One step of the trip rule: whether a reading at `ts` starts a new trip,
/// and the new `last_seen`.
pub fn first_appearance_step(last_seen: Option<i64>, ts: i64, gap_ms: i64) -> (bool, i64) {
    match last_seen {
        None => (true, ts),
        Some(l) => (ts - l > gap_ms, l.max(ts)),
    }
}

/// Passes the first reading of every trip. The per-vehicle state is the
/// last seen timestamp; idle vehicles are evicted after the trip gap.
pub fn first_appearance(cfg: RecommenderConfig) -> PreProcessor {
    let gap = cfg.trip_gap_ms();
    PreProcessor::new(
        "first_appearance",
        VEHICLE_TAG,
        VEHICLE_TAG,
        move |ctx, s| {
            let keyed = ctx.map(s, |_, v| {
                Value::pair(Value::str(&reading(v).vehicle_id), v.clone())
            });
            let spec = StateSpec {
                partitions: 4,
                ttl_ms: Some(gap as u64),
            };
            Ok(ctx.map_with_state(keyed, spec, move |_, call| {
                let mut last = call.state.and_then(Value::as_int);
                if call.values.is_empty() {
                    return last
                        .map(|l| StateOutcome::keep(Value::Int(l)))
                        .unwrap_or_default();
                }
                let mut vals: Vec<&Value> = call.values.iter().collect();
                vals.sort_by_key(|v| reading(v).timestamp);
                let mut emit = Vec::new();
                for v in vals {
                    let (pass, l) = first_appearance_step(last, reading(v).timestamp, gap);
                    if pass {
                        emit.push(v.clone());
                    }
                    last = Some(l);
                }
                StateOutcome {
                    state: last.map(Value::Int),
                    emit,
                }
            }))
        },
    )
}

/// Looks up stations through the broadcast index and keeps readings that
/// lead to a recommendation. Index entries examined count as task work.
pub fn station_search(cis: CisServices) -> PreProcessor {
    PreProcessor::new(
        "station_search",
        VEHICLE_TAG,
        RECOMMENDATION_TAG,
        move |ctx, s| {
            let cis = cis.clone();
            Ok(ctx.transform(s, move |engine, ds| {
                let handle = engine.broadcast(Value::object(IndexHandle(cis.index.clone())));
                let cis = cis.clone();
                Ok(engine.flat_map(ds, move |tc, v| {
                    let index = tc
                        .broadcast(&handle)
                        .and_then(|b| b.downcast::<IndexHandle>())
                        .expect("station index broadcast")
                        .0
                        .clone();
                    let cx = RecommendContext {
                        index: &index,
                        prices: cis.prices.as_ref(),
                        history: &cis.history,
                        config: &cis.config,
                    };
                    let (res, visits) = recommend_counted(reading(v), &cx);
                    tc.add_work(visits);
                    match res {
                        Ok(rec) => vec![Value::object(rec)],
                        Err(_) => Vec::new(),
                    }
                }))
            }))
        },
    )
}

/// Publishes every recommendation and records it in the serving view.
pub fn recommendation_output(topic: &str) -> OutputProcessor {
    let topic = topic.to_string();
    OutputProcessor::new(
        "recommendation_output",
        RECOMMENDATION_TAG,
        move |ctx, s| {
            let topic = topic.clone();
            ctx.foreach_batch(s, move |oc, items| {
                for v in items {
                    let r = v
                        .downcast::<Recommendation>()
                        .ok_or("not a recommendation")?;
                    let msg = RecommendationMessage {
                        batch_id: oc.batch_id,
                        vehicleid: r.vehicle_id.clone(),
                        station_id: r.station_id.clone(),
                        distance_km: r.distance_km,
                        price: r.price_per_liter,
                        expected_cost: r.expected_fill_cost,
                        reason: r.reason.as_str().to_string(),
                    };
                    let mut cols = BTreeMap::new();
                    cols.insert("station_id".to_string(), Value::str(&r.station_id));
                    cols.insert("price".to_string(), Value::Float(r.price_per_liter));
                    cols.insert(
                        "expected_cost".to_string(),
                        Value::Float(r.expected_fill_cost),
                    );
                    cols.insert("reason".to_string(), Value::str(r.reason.as_str()));
                    if oc.services.view.upsert(
                        "recommendations",
                        Value::str(&r.vehicle_id),
                        cols,
                        oc.batch_id,
                    ) {
                        oc.services.broker.publish(
                            &topic,
                            msg.to_json().as_bytes(),
                            oc.batch_time_ms,
                        );
                    }
                }
                Ok(())
            });
            Ok(())
        },
    )
}

/// Appends raw readings to the immutable store, once per batch.
pub fn raw_store_output(collection: &str) -> OutputProcessor {
    let collection = collection.to_string();
    OutputProcessor::new("raw_store", VEHICLE_TAG, move |ctx, s| {
        let collection = collection.clone();
        ctx.foreach_batch(s, move |oc, items| {
            if !oc.services.sink.write(&collection, oc.batch_id, Vec::new()) {
                return Ok(());
            }
            for v in items {
                let body = reading(v).to_json();
                oc.services
                    .store
                    .append(&collection, body.as_bytes(), oc.batch_time_ms)
                    .map_err(|e| e.to_string())?;
            }
            Ok(())
        });
        Ok(())
    })
}

/// Topic and collection names of a CIS deployment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CisTopics {
    pub vehicles: String,
    pub group: String,
    pub recommendations: String,
    pub raw_collection: Option<String>,
}

impl Default for CisTopics {
    fn default() -> Self {
        CisTopics {
            vehicles: "vehicle-data".into(),
            group: "cis".into(),
            recommendations: "recommendations".into(),
            raw_collection: Some("vehicle-data".into()),
        }
    }
}

/// Wires the full pipeline into `ctx`. The source feeds both the raw store
/// and the search chain.
pub fn build_pipeline(
    ctx: &mut StreamingContext,
    cis: &CisServices,
    topics: &CisTopics,
) -> Result<TypedStream, ChainError> {
    let source = vehicle_source(ctx, &topics.vehicles, &topics.group);
    if let Some(c) = &topics.raw_collection {
        raw_store_output(c).use_on(ctx, source.stream())?;
    }
    let cfg = cis.config;
    let filtered = fuel_filter(cfg).use_on(ctx, source.stream())?;
    let first = first_appearance(cfg).use_on(ctx, filtered)?;
    let recs = station_search(cis.clone()).use_on(ctx, first)?;
    recommendation_output(&topics.recommendations).use_on(ctx, recs)?;
    Ok(recs)
}
