use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use theta_core::cis::{
    fill_cost, first_appearance_step, haversine_km, linear_scan, passes_fuel_filter, GasStation,
    GeoPoint, RecommenderConfig, StationIndex, VehicleReading,
};
use theta_core::engine::Engine;
use theta_core::theta::{Broker, ImmutableStore, MemoryStore, ServingView};
use theta_core::Value;

#[path = "common/chains.rs"]
mod chains;
#[path = "common/windows.rs"]
mod windows;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chains_match_list_interpreter(seed in any::<u64>()) {
        let c = chains::random_chain(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut e = Engine::local(3);
        let all = chains::build_chain(&mut e, &c);
        let last = *all.last().unwrap();
        prop_assert_eq!(e.metrics().tasks_executed, 0);
        let got = e.collect(last).unwrap();
        prop_assert!(chains::matches_oracle(&c, &got), "{:?}", c.ops);
        prop_assert_eq!(e.count(last).unwrap() as usize, chains::interpret(&c).len());
    }

    #[test]
    fn stage_count_follows_wide_dependencies(seed in any::<u64>(), steps in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = Engine::local(2);
        let (nodes, shadow) = chains::random_dag(&mut rng, &mut e, steps);
        let root = nodes.len() - 1;
        let r = chains::check_stage_rule(&e, nodes[root], &shadow, root, &nodes);
        prop_assert!(r.is_ok(), "{:?}", r);
        prop_assert!(e.collect(nodes[root]).is_ok());
    }

    #[test]
    fn recomputed_partitions_match(seed in any::<u64>()) {
        let c = chains::random_chain(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut e = Engine::local(2);
        let all = chains::build_chain(&mut e, &c);
        for ds in all {
            let parts = e.collect_partitions(ds).unwrap();
            for (i, p) in parts.iter().enumerate() {
                prop_assert_eq!(&e.recompute_partition(ds, i).unwrap(), p);
            }
        }
    }

    #[test]
    fn persisted_node_stops_recomputation(seed in any::<u64>()) {
        let c = chains::random_chain(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut e = Engine::local(2);
        let all = chains::build_chain(&mut e, &c);
        let mid = e.persist(all[all.len() / 2]);
        e.materialize(mid).unwrap();
        let child = e.map(mid, |_, v| v.clone());
        let child = e.persist(child);
        let before = e.collect_partitions(child).unwrap();
        let ancestors: Vec<_> = all[..all.len() / 2].to_vec();
        let counts: Vec<u64> = ancestors.iter().map(|d| e.dataset_computations(*d)).collect();
        for (p, want) in before.iter().enumerate() {
            prop_assert!(e.drop_cached_partition(child, p));
            prop_assert_eq!(&e.recompute_partition(child, p).unwrap(), want);
        }
        let after: Vec<u64> = ancestors.iter().map(|d| e.dataset_computations(*d)).collect();
        prop_assert_eq!(counts, after);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn windows_regroup_random_intervals(
        data in prop::collection::vec(prop::collection::vec(-50i64..50, 0..5), 12),
        length in 1u64..=6,
        slide_pick in 0u64..6,
    ) {
        let slide = 1 + slide_pick % length;
        prop_assert_eq!(windows::run_window(length, slide, &data), windows::brute_window(length, slide, &data));
    }
}

#[derive(Debug, Clone)]
enum BrokerStep {
    Publish,
    Consume,
    Ack(usize),
    Wait(u64),
}

fn broker_step() -> impl Strategy<Value = BrokerStep> {
    prop_oneof![
        Just(BrokerStep::Publish),
        Just(BrokerStep::Consume),
        (0usize..8).prop_map(BrokerStep::Ack),
        (0u64..8_000).prop_map(BrokerStep::Wait),
    ]
}

proptest! {
    #[test]
    fn broker_conserves_messages(steps in prop::collection::vec(broker_step(), 1..80)) {
        let mut b = Broker::default();
        b.subscribe("g", "t");
        let mut now = 0;
        let mut open = Vec::new();
        let mut acked = BTreeSet::new();
        for s in steps {
            match s {
                BrokerStep::Publish => {
                    b.publish("t", b"x", now);
                }
                BrokerStep::Consume => {
                    if let Some(env) = b.consume("g", "t", now).unwrap() {
                        prop_assert!(!acked.contains(&env.message_id));
                        open.push(env);
                    }
                }
                BrokerStep::Ack(i) => {
                    if !open.is_empty() {
                        let env = open.remove(i % open.len());
                        if b.ack("g", "t", env.delivery_id).is_ok() {
                            acked.insert(env.message_id);
                        }
                    }
                }
                BrokerStep::Wait(d) => now += d,
            }
            let st = b.stats("g", "t");
            prop_assert_eq!(st.published, st.acked + st.pending + st.unacked);
        }
        // Everything unacknowledged comes back eventually.
        now += 60_000;
        let mut seen = acked.clone();
        while let Some(env) = b.consume("g", "t", now).unwrap() {
            seen.insert(env.message_id);
            b.ack("g", "t", env.delivery_id).unwrap();
        }
        prop_assert_eq!(seen.len() as u64, b.stats("g", "t").published);
    }

    #[test]
    fn view_replay_is_idempotent(
        ops in prop::collection::vec((0u64..5, 0i64..4, 0i64..100), 0..40),
        replays in 1usize..4,
    ) {
        let apply = |v: &mut ServingView| {
            for (batch, key, val) in &ops {
                let mut cols = BTreeMap::new();
                cols.insert("v".to_string(), Value::Int(*val));
                v.upsert("t", Value::Int(*key), cols, *batch);
            }
        };
        let mut once = ServingView::new();
        apply(&mut once);
        let mut many = ServingView::new();
        for _ in 0..replays {
            apply(&mut many);
        }
        let rows = |v: &ServingView| v.query("t", |_| true).into_iter().cloned().collect::<Vec<_>>();
        prop_assert_eq!(rows(&once), rows(&many));
    }

    #[test]
    fn immutable_scans_only_grow(payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..8), 0..30)) {
        let mut s = MemoryStore::new();
        let mut prev: Vec<Vec<u8>> = Vec::new();
        for (i, p) in payloads.iter().enumerate() {
            let seq = s.append("c", p, i as u64).unwrap();
            prop_assert_eq!(seq, i as u64);
            let now: Vec<Vec<u8>> = s.scan("c", &|_| true).into_iter().map(|r| r.payload.to_vec()).collect();
            prop_assert_eq!(&now[..prev.len()], &prev[..]);
            prev = now;
        }
        prop_assert_eq!(prev, payloads);
    }

    #[test]
    fn fill_cost_is_monotone(
        p in 0.5f64..3.0, dp in 0.0f64..1.0,
        d in 0.0f64..20.0, dd in 0.0f64..20.0,
        refill in 0.0f64..60.0,
    ) {
        let c = 0.07;
        prop_assert!(fill_cost(p, refill, d + dd, c) >= fill_cost(p, refill, d, c));
        prop_assert!(fill_cost(p + dp, refill, d, c) >= fill_cost(p, refill, d, c));
    }

    #[test]
    fn haversine_is_symmetric(
        a in (-90.0f64..=90.0, -180.0f64..=180.0),
        b in (-90.0f64..=90.0, -180.0f64..=180.0),
    ) {
        let (a, b) = (GeoPoint::new(a.0, a.1), GeoPoint::new(b.0, b.1));
        prop_assert!((haversine_km(a, b) - haversine_km(b, a)).abs() < 1e-9);
        prop_assert_eq!(haversine_km(a, a), 0.0);
    }

    #[test]
    fn index_equals_linear_scan(
        pts in prop::collection::vec((-60.0f64..60.0, -179.9f64..=180.0), 0..300),
        q in (-60.0f64..60.0, -180.0f64..=180.0),
        radius in 0.0f64..400.0,
    ) {
        let stations: Vec<GasStation> = pts
            .iter()
            .enumerate()
            .map(|(i, (lat, lon))| GasStation {
                station_id: format!("s{i}"),
                name: String::new(),
                latitude: *lat,
                longitude: *lon,
            })
            .collect();
        let idx = StationIndex::build(stations.clone()).unwrap();
        let at = GeoPoint::new(q.0, q.1);
        let got: BTreeSet<usize> = idx.nearby(at, radius).iter().map(|n| n.station).collect();
        let want: BTreeSet<usize> = linear_scan(&stations, at, radius).into_iter().collect();
        prop_assert_eq!(got, want);
        let hits = idx.nearby(at, radius);
        prop_assert!(hits.windows(2).all(|w| w[0].distance_km <= w[1].distance_km));
    }

    #[test]
    fn fuel_filter_is_sound(fuel in 0.0f64..=100.0) {
        let mut readings = BTreeMap::new();
        readings.insert("FUEL_LEVEL".to_string(), format!("{fuel}"));
        let r = VehicleReading {
            vehicle_id: "v".into(),
            timestamp: 0,
            latitude: 0.0,
            longitude: 0.0,
            altitude: 0.0,
            readings,
        };
        let cfg = RecommenderConfig::default();
        prop_assert_eq!(passes_fuel_filter(&r, &cfg), fuel < cfg.fuel_threshold_pct);
    }

    #[test]
    fn one_pass_per_trip(gaps in prop::collection::vec(0i64..1_799_999, 1..50)) {
        let gap = RecommenderConfig::default().trip_gap_ms();
        let mut last = None;
        let mut ts = 0;
        let mut passes = 0;
        for g in gaps {
            ts += g;
            let (pass, l) = first_appearance_step(last, ts, gap);
            passes += usize::from(pass);
            last = Some(l);
        }
        prop_assert_eq!(passes, 1);
    }
}
