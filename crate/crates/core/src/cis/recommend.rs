use alloc::string::String;

use super::geo::GeoPoint;
use super::prices::{FuelKind, PriceHistory, PriceLookup};
use super::reading::VehicleReading;
use super::rtree::StationIndex;
use super::CisError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecommenderConfig {
    pub radius_km: f64,
    pub fuel_threshold_pct: f64,
    pub critical_fuel_pct: f64,
    pub tank_capacity_l: f64,
    pub consumption_l_per_km: f64,
    pub lookback_days: u32,
    pub price_cache_ttl_s: u32,
    pub trip_gap_min: u32,
    pub fuel_kind: FuelKind,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        RecommenderConfig {
            radius_km: 10.0,
            fuel_threshold_pct: 50.0,
            critical_fuel_pct: 20.0,
            tank_capacity_l: 50.0,
            consumption_l_per_km: 0.07,
            lookback_days: 7,
            price_cache_ttl_s: 300,
            trip_gap_min: 30,
            fuel_kind: FuelKind::E5,
        }
    }
}

impl RecommenderConfig {
    pub fn validate(&self) -> Result<(), CisError> {
        let positive = self.radius_km > 0.0
            && self.fuel_threshold_pct > 0.0
            && self.critical_fuel_pct > 0.0
            && self.tank_capacity_l > 0.0
            && self.consumption_l_per_km > 0.0
            && self.lookback_days > 0
            && self.price_cache_ttl_s > 0
            && self.trip_gap_min > 0;
        if !positive {
            return Err(CisError::InvalidConfig("all settings must be positive"));
        }
        if self.critical_fuel_pct >= self.fuel_threshold_pct {
            return Err(CisError::InvalidConfig(
                "critical fuel level must be below the threshold",
            ));
        }
        Ok(())
    }

    pub fn trip_gap_ms(&self) -> i64 {
        i64::from(self.trip_gap_min) * 60_000
    }

    pub fn lookback_ms(&self) -> i64 {
        i64::from(self.lookback_days) * 86_400_000
    }

    pub fn price_cache_ttl_ms(&self) -> i64 {
        i64::from(self.price_cache_ttl_s) * 1000
    }

    /// Litres needed to fill the tank at `fuel_pct`.
    pub fn refill_liters(&self, fuel_pct: f64) -> f64 {
        self.tank_capacity_l * (1.0 - fuel_pct / 100.0)
    }
}

/// Expected cost of filling up at a station `distance_km` away.
pub fn fill_cost(price: f64, refill_l: f64, distance_km: f64, consumption_l_per_km: f64) -> f64 {
    price * refill_l + distance_km * consumption_l_per_km * price
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reason {
    GoodPrice,
    LowFuel,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::GoodPrice => "good_price",
            Reason::LowFuel => "low_fuel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoRecommendation {
    NoFuel,
    NoStation,
    NoPrice,
    WaitForDrop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub vehicle_id: String,
    pub station_id: String,
    pub distance_km: f64,
    pub price_per_liter: f64,
    pub expected_fill_cost: f64,
    pub reason: Reason,
}

/// Everything the recommender reads besides the reading itself.
pub struct RecommendContext<'a> {
    pub index: &'a StationIndex,
    pub prices: &'a dyn PriceLookup,
    pub history: &'a PriceHistory,
    pub config: &'a RecommenderConfig,
}

/// Picks the station with the lowest expected fill cost within the radius
/// and decides whether to notify. Also returns the index entries examined.
pub fn recommend_counted(
    r: &VehicleReading,
    cx: &RecommendContext<'_>,
) -> (Result<Recommendation, NoRecommendation>, u64) {
    let cfg = cx.config;
    let Some(fuel) = r.fuel_level() else {
        return (Err(NoRecommendation::NoFuel), 0);
    };
    let (candidates, visits) = cx
        .index
        .nearby_counted(GeoPoint::new(r.latitude, r.longitude), cfg.radius_km);
    if candidates.is_empty() {
        return (Err(NoRecommendation::NoStation), visits);
    }
    let refill = cfg.refill_liters(fuel);
    let mut best: Option<(f64, f64, &str, f64)> = None;
    for c in &candidates {
        let id = cx.index.station(c.station).station_id.as_str();
        let Ok(p) = cx.prices.current_price(id, cfg.fuel_kind, r.timestamp) else {
            continue;
        };
        let total = fill_cost(p, refill, c.distance_km, cfg.consumption_l_per_km);
        let better = match best {
            None => true,
            Some((bt, bd, bid, _)) => (total, c.distance_km, id) < (bt, bd, bid),
        };
        if better {
            best = Some((total, c.distance_km, id, p));
        }
    }
    let Some((total, distance, id, price)) = best else {
        return (Err(NoRecommendation::NoPrice), visits);
    };
    let good = cx
        .history
        .average(id, cfg.fuel_kind, cfg.lookback_ms(), r.timestamp)
        .is_ok_and(|h| price <= h.mean);
    let reason = if good {
        Reason::GoodPrice
    } else if fuel <= cfg.critical_fuel_pct {
        Reason::LowFuel
    } else {
        return (Err(NoRecommendation::WaitForDrop), visits);
    };
    let rec = Recommendation {
        vehicle_id: r.vehicle_id.clone(),
        station_id: String::from(id),
        distance_km: distance,
        price_per_liter: price,
        expected_fill_cost: total,
        reason,
    };
    (Ok(rec), visits)
}

pub fn recommend_station(
    r: &VehicleReading,
    cx: &RecommendContext<'_>,
) -> Result<Recommendation, NoRecommendation> {
    recommend_counted(r, cx).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cis::prices::PriceEvent;
    use crate::cis::rtree::GasStation;
    use alloc::collections::BTreeMap;
    use alloc::string::ToString;
    use alloc::vec;

    const NOW: i64 = 100 * 86_400_000;

    fn reading(fuel: &str) -> VehicleReading {
        let mut readings = BTreeMap::new();
        readings.insert("FUEL_LEVEL".to_string(), fuel.to_string());
        VehicleReading {
            vehicle_id: "v".into(),
            timestamp: NOW,
            latitude: 50.0,
            longitude: 8.0,
            altitude: 0.0,
            readings,
        }
    }

    fn station(id: &str, km_north: f64) -> GasStation {
        GasStation {
            station_id: id.into(),
            name: id.into(),
            latitude: 50.0 + km_north / 111.19492664455873,
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

    #[test]
    fn cheaper_far_station_wins() {
        let idx = StationIndex::build(vec![station("A", 2.0), station("B", 9.0)]).unwrap();
        let h = PriceHistory::from_events([price("A", 0, 1.50), price("B", 0, 1.40)]);
        let cfg = RecommenderConfig::default();
        let cx = RecommendContext {
            index: &idx,
            prices: &h,
            history: &h,
            config: &cfg,
        };
        let r = recommend_station(&reading("40"), &cx).unwrap();
        assert_eq!(r.station_id, "B");
        assert!((r.expected_fill_cost - 42.882).abs() < 1e-6);
        assert!((fill_cost(1.50, 30.0, 2.0, 0.07) - 45.21).abs() < 1e-9);
        assert_eq!(r.reason, Reason::GoodPrice);
    }

    #[test]
    fn expensive_station_needs_low_fuel() {
        let idx = StationIndex::build(vec![station("A", 1.0)]).unwrap();
        let h = PriceHistory::from_events([
            price("A", NOW - 86_400_000, 1.30),
            price("A", NOW - 1000, 1.60),
        ]);
        let cfg = RecommenderConfig::default();
        let cx = RecommendContext {
            index: &idx,
            prices: &h,
            history: &h,
            config: &cfg,
        };
        assert_eq!(
            recommend_station(&reading("10"), &cx).unwrap().reason,
            Reason::LowFuel
        );
        assert_eq!(
            recommend_station(&reading("30"), &cx),
            Err(NoRecommendation::WaitForDrop)
        );
    }

    #[test]
    fn nothing_nearby() {
        let idx = StationIndex::build(vec![station("A", 30.0)]).unwrap();
        let h = PriceHistory::new();
        let cfg = RecommenderConfig::default();
        let cx = RecommendContext {
            index: &idx,
            prices: &h,
            history: &h,
            config: &cfg,
        };
        assert_eq!(
            recommend_station(&reading("10"), &cx),
            Err(NoRecommendation::NoStation)
        );
        let idx = StationIndex::build(vec![station("A", 1.0)]).unwrap();
        let cx = RecommendContext { index: &idx, ..cx };
        assert_eq!(
            recommend_station(&reading("10"), &cx),
            Err(NoRecommendation::NoPrice)
        );
    }

    #[test]
    fn config_rules() {
        assert!(RecommenderConfig::default().validate().is_ok());
        let bad = RecommenderConfig {
            critical_fuel_pct: 60.0,
            ..RecommenderConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(RecommenderConfig::default().refill_liters(40.0), 30.0);
    }
}
