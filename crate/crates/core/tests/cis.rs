use std::sync::Arc;

use theta_core::cis::{
    build_pipeline, first_appearance, vehicle_source, CisServices, CisTopics, FuelKind, GasStation,
    MemorySink, NotificationService, PriceEvent, PriceHistory, RecommendationMessage,
    RecommenderConfig, StationIndex,
};
use theta_core::engine::WorkerId;
use theta_core::stream::{StreamConfig, StreamingApp, StreamingContext};
use theta_core::theta::Services;

const DAY: i64 = 86_400_000;
const KM_PER_DEG: f64 = 111.19492664455873;

fn slots(workers: u32, per_worker: u32) -> Vec<WorkerId> {
    let mut v = Vec::new();
    for _ in 0..per_worker {
        v.extend((0..workers).map(WorkerId));
    }
    v
}

fn reading_json(id: &str, ts: u64, lat: f64, lon: f64, fuel: Option<f64>) -> String {
    let readings = match fuel {
        Some(f) => format!(r#"{{"FUEL_LEVEL":"{f}","ENGINE_RPM":"2100"}}"#),
        None => "{}".to_string(),
    };
    format!(
        r#"{{"altitude":112.0,"latitude":{lat},"longitude":{lon},"readings":{readings},"timestamp":{ts},"vehicleid":"{id}"}}"#
    )
}

fn station(id: &str, km_north: f64) -> GasStation {
    GasStation {
        station_id: id.into(),
        name: format!("Station {id}"),
        latitude: 50.0 + km_north / KM_PER_DEG,
        longitude: 8.0,
    }
}

fn price(id: &str, t: i64, p: f64) -> PriceEvent {
    PriceEvent {
        station_id: id.into(),
        fuel: FuelKind::E5,
        price: p,
        effective_from: t,
    }
}

/// A at 2 km for 1.50, B at 9 km for 1.40, both steady for weeks.
fn cis_services() -> CisServices {
    let index = StationIndex::build(vec![station("A", 2.0), station("B", 9.0)]).unwrap();
    let history =
        PriceHistory::from_events([price("A", -30 * DAY, 1.50), price("B", -30 * DAY, 1.40)]);
    let history = Arc::new(history);
    CisServices {
        index: Arc::new(index),
        prices: history.clone(),
        history,
        config: RecommenderConfig::default(),
    }
}

fn cis_app(cis: &CisServices, svc: &mut Services) -> StreamingApp {
    svc.broker.subscribe("audit", "recommendations");
    let mut ctx = StreamingContext::new(1000).unwrap();
    build_pipeline(&mut ctx, cis, &CisTopics::default()).unwrap();
    StreamingApp::start(ctx, StreamConfig::default(), slots(2, 2), 0, svc).unwrap()
}

/// Everything published on the recommendations topic so far.
fn recommendations(svc: &mut Services) -> Vec<RecommendationMessage> {
    let mut out = Vec::new();
    while let Some(env) = svc
        .broker
        .consume_auto_ack("audit", "recommendations", u64::MAX)
        .unwrap()
    {
        out.push(serde_json::from_slice(&env.payload).unwrap());
    }
    out
}

#[test]
fn cheaper_station_reaches_the_driver() {
    let cis = cis_services();
    let mut svc = Services::new();
    let mut push = NotificationService::new(&mut svc.broker, "push", "recommendations");
    let mut app = cis_app(&cis, &mut svc);
    app.advance_to(500, &mut svc).unwrap();
    svc.broker.publish(
        "vehicle-data",
        reading_json("v1", 500, 50.0, 8.0, Some(40.0)).as_bytes(),
        500,
    );
    svc.broker.publish(
        "vehicle-data",
        reading_json("v2", 500, 50.0, 8.0, Some(60.0)).as_bytes(),
        500,
    );
    svc.broker.publish(
        "vehicle-data",
        reading_json("v3", 500, 50.0, 8.0, None).as_bytes(),
        500,
    );
    svc.broker.publish("vehicle-data", b"{\"vehicleid\":", 500);
    app.advance_to(3000, &mut svc).unwrap();

    let recs = recommendations(&mut svc);
    assert_eq!(recs.len(), 1);
    assert_eq!(
        (recs[0].vehicleid.as_str(), recs[0].station_id.as_str()),
        ("v1", "B")
    );
    assert_eq!(recs[0].reason, "good_price");
    assert!((recs[0].expected_cost - 42.882).abs() < 1e-6);
    assert_eq!(recs[0].batch_id, 1);

    let mut sink = MemorySink::default();
    push.poll(&mut svc.broker, &mut sink, 3000).unwrap();
    assert_eq!(sink.delivered.len(), 1);
    assert_eq!(sink.delivered[0].price, 1.40);

    assert_eq!(svc.store.len("vehicle-data"), 3);
    assert_eq!(svc.broker.retained("vehicle-data.dead-letter"), 1);
    assert_eq!(svc.view.len("recommendations"), 1);
    assert!(cis.index.query_stats().0 >= 1);
}

#[test]
fn one_recommendation_per_trip() {
    let cis = cis_services();
    let mut svc = Services::new();
    let mut app = cis_app(&cis, &mut svc);
    let mut t = 100;
    // A trip of 120 readings one second apart, then 31 minutes of silence.
    for _ in 0..120 {
        app.advance_to(t, &mut svc).unwrap();
        svc.broker.publish(
            "vehicle-data",
            reading_json("v1", t, 50.0, 8.0, Some(30.0)).as_bytes(),
            t,
        );
        t += 1000;
    }
    let second = t + 31 * 60_000;
    app.advance_to(second, &mut svc).unwrap();
    svc.broker.publish(
        "vehicle-data",
        reading_json("v1", second, 50.0, 8.0, Some(30.0)).as_bytes(),
        second,
    );
    app.advance_to(second + 3000, &mut svc).unwrap();

    let recs = recommendations(&mut svc);
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| r.vehicleid == "v1"));
    assert_eq!(svc.store.len("vehicle-data"), 121);
}

#[test]
fn driver_restart_sends_no_duplicate_notifications() {
    let cis = cis_services();
    let mut svc = Services::new();
    let mut push = NotificationService::new(&mut svc.broker, "push", "recommendations");
    let mut app = cis_app(&cis, &mut svc);
    for k in 0..40u64 {
        let t = 100 + k * 250;
        app.advance_to(t, &mut svc).unwrap();
        let id = format!("v{k}");
        svc.broker.publish(
            "vehicle-data",
            reading_json(&id, t, 50.0, 8.0, Some(30.0)).as_bytes(),
            t,
        );
    }
    app.kill(10_200, &mut svc).unwrap();
    let mut ctx = StreamingContext::new(1000).unwrap();
    build_pipeline(&mut ctx, &cis, &CisTopics::default()).unwrap();
    let mut app =
        StreamingApp::recover(ctx, StreamConfig::default(), slots(2, 2), 15_000, &mut svc).unwrap();
    app.advance_to(25_000, &mut svc).unwrap();

    let mut sink = MemorySink::default();
    push.poll(&mut svc.broker, &mut sink, 25_000).unwrap();
    let mut ids: Vec<&str> = sink
        .delivered
        .iter()
        .map(|n| n.vehicleid.as_str())
        .collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 40);
    assert_eq!(sink.delivered.len(), 40);
    assert_eq!(svc.store.len("vehicle-data"), 40);
}

/// Source followed by the first-appearance filter; returns the live trip
/// states after feeding `per_second` readings for 30 seconds.
fn trip_states(per_second: u64, id_of: impl Fn(u64, u64) -> String) -> usize {
    let cfg = RecommenderConfig::default();
    let mut ctx = StreamingContext::new(1000).unwrap();
    let src = vehicle_source(&mut ctx, "vehicle-data", "cis");
    first_appearance(cfg)
        .use_on(&mut ctx, src.stream())
        .unwrap();
    let mut svc = Services::new();
    let mut app =
        StreamingApp::start(ctx, StreamConfig::default(), slots(2, 2), 0, &mut svc).unwrap();
    for s in 0..30u64 {
        for i in 0..per_second {
            let t = s * 1000 + i * 1000 / per_second;
            app.advance_to(t, &mut svc).unwrap();
            let body = reading_json(&id_of(s, i), t, 50.0, 8.0, Some(30.0));
            svc.broker.publish("vehicle-data", body.as_bytes(), t);
        }
    }
    app.advance_to(32_000, &mut svc).unwrap();
    assert_eq!(app.counters().processed, 30 * per_second);
    app.state_count(0)
}

#[test]
fn live_trip_states_per_load_scenario() {
    assert_eq!(
        trip_states(1000, |s, i| format!("ls3-{}", s * 1000 + i)),
        30_000
    );
    assert_eq!(trip_states(1000, |_, i| format!("ls2-{i}")), 1_000);
}

#[test]
fn trip_state_is_evicted_after_the_gap() {
    let cfg = RecommenderConfig {
        trip_gap_min: 1,
        ..RecommenderConfig::default()
    };
    let mut ctx = StreamingContext::new(1000).unwrap();
    let src = vehicle_source(&mut ctx, "vehicle-data", "cis");
    first_appearance(cfg)
        .use_on(&mut ctx, src.stream())
        .unwrap();
    let mut svc = Services::new();
    let mut app =
        StreamingApp::start(ctx, StreamConfig::default(), slots(2, 2), 0, &mut svc).unwrap();
    app.advance_to(100, &mut svc).unwrap();
    svc.broker.publish(
        "vehicle-data",
        reading_json("v", 100, 50.0, 8.0, Some(30.0)).as_bytes(),
        100,
    );
    app.advance_to(5_000, &mut svc).unwrap();
    assert_eq!(app.state_count(0), 1);
    app.advance_to(70_000, &mut svc).unwrap();
    assert_eq!(app.state_count(0), 0);
}
