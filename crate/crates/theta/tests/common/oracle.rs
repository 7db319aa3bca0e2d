//! Random recommendation cases and a brute-force evaluator written from
//! the rules alone: fuel filter, stations within the radius, lowest total
//! fill cost with distance and id as tie breakers, the time-weighted
//! history gate and the low-fuel override.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use theta_core::cis::{
    CisServices, FuelKind, GasStation, PriceEvent, PriceHistory, RecommenderConfig, StationIndex,
    StationPrices, VehicleReading,
};

pub const NOW: i64 = 1_464_739_200_000 + 1_000;
const DAY: i64 = 86_400_000;
const R_KM: f64 = 6371.0;

#[derive(Debug, Clone)]
pub struct CaseStation {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    /// `(effective_from, price in tenths of a cent)`, oldest first.
    pub events: Vec<(i64, i64)>,
}

#[derive(Debug, Clone)]
pub struct Case {
    pub vehicle: String,
    pub lat: f64,
    pub lon: f64,
    pub fuel: Option<f64>,
    pub stations: Vec<CaseStation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expected {
    pub station_id: String,
    pub price: f64,
    pub total: f64,
    pub reason: &'static str,
}

/// Point `km` away from `(lat, lon)` on `bearing` radians.
fn destination(lat: f64, lon: f64, km: f64, bearing: f64) -> (f64, f64) {
    let (p1, l1, d) = (lat.to_radians(), lon.to_radians(), km / R_KM);
    let p2 = (p1.sin() * d.cos() + p1.cos() * d.sin() * bearing.cos()).asin();
    let l2 = l1 + (bearing.sin() * d.sin() * p1.cos()).atan2(d.cos() - p1.sin() * p2.sin());
    (p2.to_degrees(), l2.to_degrees())
}

/// Great-circle distance through the central angle's atan2 form.
fn distance_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dl = (b.1 - a.1).to_radians();
    let x = p2.cos() * dl.sin();
    let y = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    let z = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    R_KM * (x.hypot(y)).atan2(z)
}

/// Case `i` sits on its own grid cell so cases never see each other.
pub fn random_case<R: Rng>(i: usize, rng: &mut R) -> Case {
    let lat = 40.0 + (i / 20) as f64;
    let lon = (i % 20) as f64;
    let fuel = if rng.random_bool(0.05) {
        None
    } else {
        Some(f64::from(rng.random_range(0..=600)) / 10.0)
    };
    let n = rng.random_range(0..=8);
    let mut stations: Vec<CaseStation> = Vec::new();
    for j in 0..n {
        let id = format!("c{i:03}s{j}");
        if j > 0 && rng.random_bool(0.1) {
            // Same place and prices as the previous one: only the id differs.
            let prev = stations[j - 1].clone();
            stations.push(CaseStation { id, ..prev });
            continue;
        }
        let (slat, slon) = destination(
            lat,
            lon,
            rng.random_range(0.0..13.0),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        let mut events = Vec::new();
        if !rng.random_bool(0.1) {
            events.push((NOW - 10 * DAY, rng.random_range(1300..=1700)));
            let mut changes: Vec<i64> = (0..rng.random_range(0..=3))
                .map(|_| NOW - rng.random_range(0..7 * DAY))
                .collect();
            changes.sort_unstable();
            for t in changes {
                events.push((t, rng.random_range(1300..=1700)));
            }
        }
        stations.push(CaseStation {
            id,
            lat: slat,
            lon: slon,
            events,
        });
    }
    Case {
        vehicle: format!("veh{i:03}"),
        lat,
        lon,
        fuel,
        stations,
    }
}

pub fn random_cases<R: Rng>(n: usize, rng: &mut R) -> Vec<Case> {
    (0..n).map(|i| random_case(i, rng)).collect()
}

fn price_at(events: &[(i64, i64)], t: i64) -> Option<i64> {
    events
        .iter()
        .rev()
        .find(|(at, _)| *at <= t)
        .map(|(_, p)| *p)
}

/// Whether `p` is at most the time-weighted mean over the lookback window,
/// in exact integer arithmetic.
fn at_most_mean(events: &[(i64, i64)], p: i64, lookback: i64) -> bool {
    let start = NOW - lookback;
    let mut area: i128 = 0;
    let mut t = start;
    let mut cur = price_at(events, start).expect("history starts before the window");
    for &(at, price) in events.iter().filter(|(at, _)| *at > start && *at <= NOW) {
        area += i128::from(cur) * i128::from(at - t);
        t = at;
        cur = price;
    }
    area += i128::from(cur) * i128::from(NOW - t);
    i128::from(p) * i128::from(lookback) <= area
}

/// What the pipeline should answer for the case's first reading.
pub fn evaluate(case: &Case, cfg: &RecommenderConfig) -> Option<Expected> {
    let fuel = case.fuel?;
    if fuel >= cfg.fuel_threshold_pct {
        return None;
    }
    let refill = cfg.tank_capacity_l * (1.0 - fuel / 100.0);
    let mut best: Option<(f64, f64, &str, i64, &CaseStation)> = None;
    for s in &case.stations {
        let d = distance_km((case.lat, case.lon), (s.lat, s.lon));
        if d > cfg.radius_km {
            continue;
        }
        let Some(milli) = price_at(&s.events, NOW) else {
            continue;
        };
        let p = milli as f64 / 1000.0;
        let total = p * refill + d * cfg.consumption_l_per_km * p;
        let key = (total, d, s.id.as_str());
        if best.as_ref().is_none_or(|b| key < (b.0, b.1, b.2)) {
            best = Some((total, d, s.id.as_str(), milli, s));
        }
    }
    let (total, _, id, milli, s) = best?;
    let reason = if at_most_mean(&s.events, milli, cfg.lookback_ms()) {
        "good_price"
    } else if fuel <= cfg.critical_fuel_pct {
        "low_fuel"
    } else {
        return None;
    };
    Some(Expected {
        station_id: id.to_string(),
        price: milli as f64 / 1000.0,
        total,
        reason,
    })
}

/// Stations and price events of every case.
pub fn corpus(cases: &[Case]) -> (Vec<GasStation>, Vec<PriceEvent>) {
    let mut stations = Vec::new();
    let mut events = Vec::new();
    for c in cases {
        for s in &c.stations {
            stations.push(GasStation {
                station_id: s.id.clone(),
                name: s.id.clone(),
                latitude: s.lat,
                longitude: s.lon,
            });
            for &(t, p) in &s.events {
                events.push(PriceEvent {
                    station_id: s.id.clone(),
                    fuel: FuelKind::E5,
                    price: p as f64 / 1000.0,
                    effective_from: t,
                });
            }
        }
    }
    (stations, events)
}

/// What a live price service would answer at `NOW`.
pub fn current_prices(cases: &[Case]) -> BTreeMap<String, StationPrices> {
    let mut out = BTreeMap::new();
    for s in cases.iter().flat_map(|c| &c.stations) {
        if let Some(p) = price_at(&s.events, NOW) {
            let mut prices = StationPrices::default();
            prices.set(FuelKind::E5, p as f64 / 1000.0);
            out.insert(s.id.clone(), prices);
        }
    }
    out
}

/// Index and history covering every case.
pub fn services(cases: &[Case], cfg: RecommenderConfig) -> CisServices {
    let (stations, events) = corpus(cases);
    let history = Arc::new(PriceHistory::from_events(events));
    CisServices {
        index: Arc::new(StationIndex::build(stations).expect("unique ids")),
        prices: history.clone(),
        history,
        config: cfg,
    }
}

pub fn reading(case: &Case, timestamp: i64) -> VehicleReading {
    let mut readings = BTreeMap::new();
    if let Some(f) = case.fuel {
        readings.insert("FUEL_LEVEL".to_string(), format!("{f}"));
    }
    VehicleReading {
        vehicle_id: case.vehicle.clone(),
        timestamp,
        latitude: case.lat,
        longitude: case.lon,
        altitude: 100.0,
        readings,
    }
}
