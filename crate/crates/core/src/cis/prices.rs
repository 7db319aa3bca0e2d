use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use core::sync::atomic::{AtomicU64, Ordering};

use super::CisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FuelKind {
    E5,
    E10,
    Diesel,
}

impl FuelKind {
    pub const ALL: [FuelKind; 3] = [FuelKind::E5, FuelKind::E10, FuelKind::Diesel];

    pub fn as_str(self) -> &'static str {
        match self {
            FuelKind::E5 => "e5",
            FuelKind::E10 => "e10",
            FuelKind::Diesel => "diesel",
        }
    }
}

impl fmt::Display for FuelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FuelKind {
    type Err = CisError;

    fn from_str(s: &str) -> Result<Self, CisError> {
        match s {
            "e5" => Ok(FuelKind::E5),
            "e10" => Ok(FuelKind::E10),
            "diesel" => Ok(FuelKind::Diesel),
            other => Err(CisError::UnknownFuel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceEvent {
    pub station_id: String,
    pub fuel: FuelKind,
    /// EUR per litre.
    pub price: f64,
    /// Epoch milliseconds.
    pub effective_from: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Price change history; each event holds until the next one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriceHistory {
    series: BTreeMap<(String, FuelKind), Vec<(i64, f64)>>,
}

impl PriceHistory {
    pub fn new() -> Self {
        PriceHistory::default()
    }

    pub fn from_events(events: impl IntoIterator<Item = PriceEvent>) -> Self {
        let mut h = PriceHistory::new();
        for e in events {
            h.insert(e);
        }
        h
    }

    /// Events with equal timestamps keep insertion order; the last wins.
    pub fn insert(&mut self, e: PriceEvent) {
        let s = self.series.entry((e.station_id, e.fuel)).or_default();
        let at = s.partition_point(|(t, _)| *t <= e.effective_from);
        s.insert(at, (e.effective_from, e.price));
    }

    pub fn len(&self) -> usize {
        self.series.values().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Price in effect at `t`.
    pub fn price_at(&self, station: &str, fuel: FuelKind, t: i64) -> Option<f64> {
        let s = self.series.get(&(station.to_string(), fuel))?;
        let i = s.partition_point(|(ts, _)| *ts <= t);
        (i > 0).then(|| s[i - 1].1)
    }

    /// Time-weighted mean, min and max of the price signal over
    /// `[now - lookback_ms, now]`. Before the first event inside the window
    /// the last earlier price applies; with no earlier price the window
    /// starts at the first event.
    pub fn average(
        &self,
        station: &str,
        fuel: FuelKind,
        lookback_ms: i64,
        now: i64,
    ) -> Result<PriceStats, CisError> {
        let no_history = || CisError::NoHistory {
            station: station.to_string(),
            fuel,
        };
        let s = self
            .series
            .get(&(station.to_string(), fuel))
            .ok_or_else(no_history)?;
        let end = s.partition_point(|(t, _)| *t <= now);
        if end == 0 {
            return Err(no_history());
        }
        let s = &s[..end];
        let start = now - lookback_ms;
        let first = s.partition_point(|(t, _)| *t <= start);
        // Segments as (from, price), the first one clipped to the window.
        let mut segs: Vec<(i64, f64)> = Vec::new();
        if first > 0 {
            segs.push((start, s[first - 1].1));
        }
        segs.extend_from_slice(&s[first..]);
        let (mut area, mut min, mut max) = (0.0, f64::MAX, f64::MIN);
        for (i, (from, p)) in segs.iter().enumerate() {
            let to = segs.get(i + 1).map_or(now, |n| n.0);
            area += p * (to - from) as f64;
            min = min.min(*p);
            max = max.max(*p);
        }
        let span = now - segs[0].0;
        // Clamped so rounding never puts a constant signal off its own price.
        let mean = if span > 0 {
            (area / span as f64).clamp(min, max)
        } else {
            segs[segs.len() - 1].1
        };
        Ok(PriceStats { mean, min, max })
    }
}

/// Current prices of one station as served by the live price API.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StationPrices {
    pub e5: Option<f64>,
    pub e10: Option<f64>,
    pub diesel: Option<f64>,
}

impl StationPrices {
    pub fn get(&self, fuel: FuelKind) -> Option<f64> {
        match fuel {
            FuelKind::E5 => self.e5,
            FuelKind::E10 => self.e10,
            FuelKind::Diesel => self.diesel,
        }
    }

    pub fn set(&mut self, fuel: FuelKind, price: f64) {
        match fuel {
            FuelKind::E5 => self.e5 = Some(price),
            FuelKind::E10 => self.e10 = Some(price),
            FuelKind::Diesel => self.diesel = Some(price),
        }
    }
}

/// Upstream live-price service.
pub trait PriceSource: Send + Sync {
    fn fetch(&self, station_id: &str) -> Result<StationPrices, CisError>;
}

/// Whatever the recommender asks for the current price.
pub trait PriceLookup: Send + Sync {
    fn current_price(&self, station_id: &str, fuel: FuelKind, now: i64) -> Result<f64, CisError>;
}

/// In-memory price source that counts upstream fetches.
#[derive(Debug, Default)]
pub struct StubPriceSource {
    prices: BTreeMap<String, StationPrices>,
    fetches: AtomicU64,
}

impl StubPriceSource {
    pub fn new(prices: BTreeMap<String, StationPrices>) -> Self {
        StubPriceSource {
            prices,
            fetches: AtomicU64::new(0),
        }
    }

    /// Current prices taken from the latest history event at `now`.
    pub fn from_history(history: &PriceHistory, now: i64) -> Self {
        let mut prices: BTreeMap<String, StationPrices> = BTreeMap::new();
        for (station, fuel) in history.series.keys() {
            if let Some(p) = history.price_at(station, *fuel, now) {
                prices.entry(station.clone()).or_default().set(*fuel, p);
            }
        }
        StubPriceSource::new(prices)
    }

    pub fn fetches(&self) -> u64 {
        self.fetches.load(Ordering::Relaxed)
    }
}

impl PriceSource for StubPriceSource {
    fn fetch(&self, station_id: &str) -> Result<StationPrices, CisError> {
        self.fetches.fetch_add(1, Ordering::Relaxed);
        self.prices
            .get(station_id)
            .copied()
            .ok_or_else(|| CisError::StationNotFound(station_id.to_string()))
    }
}

/// Read-through cache with a fixed time to live per `(station, fuel)`.
pub struct PriceCache<S> {
    source: S,
    ttl_ms: i64,
    entries: spin::Mutex<BTreeMap<(String, FuelKind), (i64, f64)>>,
}

impl<S: PriceSource> PriceCache<S> {
    pub fn new(source: S, ttl_ms: i64) -> Self {
        PriceCache {
            source,
            ttl_ms,
            entries: spin::Mutex::new(BTreeMap::new()),
        }
    }

    pub fn source(&self) -> &S {
        &self.source
    }
}

impl<S: PriceSource> PriceLookup for PriceCache<S> {
    fn current_price(&self, station_id: &str, fuel: FuelKind, now: i64) -> Result<f64, CisError> {
        let key = (station_id.to_string(), fuel);
        if let Some((at, p)) = self.entries.lock().get(&key) {
            if now - at < self.ttl_ms && now >= *at {
                return Ok(*p);
            }
        }
        let prices = self.source.fetch(station_id)?;
        let p = prices.get(fuel).ok_or_else(|| CisError::NoPrice {
            station: station_id.to_string(),
            fuel,
        })?;
        self.entries.lock().insert(key, (now, p));
        Ok(p)
    }
}

/// Prices straight from the history, no cache.
impl PriceLookup for PriceHistory {
    fn current_price(&self, station_id: &str, fuel: FuelKind, now: i64) -> Result<f64, CisError> {
        self.price_at(station_id, fuel, now)
            .ok_or_else(|| CisError::StationNotFound(station_id.to_string()))
    }
}
