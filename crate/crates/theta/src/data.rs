//! Station and price files, plus seeded synthetic corpora.
//!
//! Stations: `station_id,name,latitude,longitude`.
//! Prices: `station_id,fuel,price,effective_from` with `effective_from` as
//! an ISO-8601 UTC timestamp.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use theta_core::cis::{parse_vehicle_reading, FuelKind, GasStation, PriceEvent, VehicleReading};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct StationRow {
    station_id: String,
    name: String,
    latitude: f64,
    longitude: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PriceRow {
    station_id: String,
    fuel: String,
    price: f64,
    effective_from: String,
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn record_err(path: &Path, line: u64, reason: impl ToString) -> Error {
    Error::Record {
        path: path.to_path_buf(),
        line,
        reason: reason.to_string(),
    }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, want: &[&str]) -> Result<()> {
    let got = rdr.headers().map_err(csv_err(path))?;
    if got.iter().ne(want.iter().copied()) {
        return Err(record_err(
            path,
            1,
            format!("expected header {}", want.join(",")),
        ));
    }
    Ok(())
}

pub fn parse_timestamp(s: &str) -> std::result::Result<i64, chrono::ParseError> {
    Ok(DateTime::parse_from_rfc3339(s)?.timestamp_millis())
}

pub fn format_timestamp(ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .unwrap_or_default()
        .to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn read_stations(path: &Path) -> Result<Vec<GasStation>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    check_header(
        path,
        &mut rdr,
        &["station_id", "name", "latitude", "longitude"],
    )?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = line_of(&rec);
        let row: StationRow = rec
            .deserialize(None)
            .map_err(|e| record_err(path, line, e))?;
        if !(-90.0..=90.0).contains(&row.latitude) || !(-180.0..=180.0).contains(&row.longitude) {
            return Err(record_err(path, line, "coordinates out of range"));
        }
        out.push(GasStation {
            station_id: row.station_id,
            name: row.name,
            latitude: row.latitude,
            longitude: row.longitude,
        });
    }
    Ok(out)
}

pub fn write_stations(path: &Path, stations: &[GasStation]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for s in stations {
        w.serialize(StationRow {
            station_id: s.station_id.clone(),
            name: s.name.clone(),
            latitude: s.latitude,
            longitude: s.longitude,
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_prices(path: &Path) -> Result<Vec<PriceEvent>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    check_header(
        path,
        &mut rdr,
        &["station_id", "fuel", "price", "effective_from"],
    )?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = line_of(&rec);
        let row: PriceRow = rec
            .deserialize(None)
            .map_err(|e| record_err(path, line, e))?;
        let fuel: FuelKind = row.fuel.parse().map_err(|e| record_err(path, line, e))?;
        let effective_from =
            parse_timestamp(&row.effective_from).map_err(|e| record_err(path, line, e))?;
        if !(row.price.is_finite() && row.price > 0.0) {
            return Err(record_err(path, line, "price must be positive"));
        }
        out.push(PriceEvent {
            station_id: row.station_id,
            fuel,
            price: row.price,
            effective_from,
        });
    }
    Ok(out)
}

pub fn write_prices(path: &Path, events: &[PriceEvent]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for e in events {
        w.serialize(PriceRow {
            station_id: e.station_id.clone(),
            fuel: e.fuel.as_str().to_string(),
            price: e.price,
            effective_from: format_timestamp(e.effective_from),
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads one vehicle message per line; blank lines are skipped.
pub fn read_readings(path: &Path) -> Result<Vec<VehicleReading>> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = parse_vehicle_reading(line.as_bytes())
            .map_err(|e| record_err(path, i as u64 + 1, e))?;
        out.push(r);
    }
    Ok(out)
}

/// Area the synthetic corpora live in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub center_lat: f64,
    pub center_lon: f64,
    pub half_lat: f64,
    pub half_lon: f64,
}

impl Default for Region {
    fn default() -> Self {
        Region {
            center_lat: 51.0,
            center_lon: 10.0,
            half_lat: 3.0,
            half_lon: 4.5,
        }
    }
}

impl Region {
    pub fn sample(&self, rng: &mut impl Rng) -> (f64, f64) {
        (
            self.center_lat + rng.random_range(-self.half_lat..=self.half_lat),
            self.center_lon + rng.random_range(-self.half_lon..=self.half_lon),
        )
    }
}

pub fn random_stations(n: usize, region: Region, seed: u64) -> Vec<GasStation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (latitude, longitude) = region.sample(&mut rng);
            GasStation {
                station_id: format!("st{i:05}"),
                name: format!("Station {i}"),
                latitude,
                longitude,
            }
        })
        .collect()
}

/// A price series per station and fuel over `[now - days, now]`: one event
/// at the window start, then a change every 6 to 36 hours.
pub fn random_price_history(
    stations: &[GasStation],
    fuels: &[FuelKind],
    now: i64,
    days: u32,
    seed: u64,
) -> Vec<PriceEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = now - i64::from(days) * 86_400_000;
    let mut out = Vec::new();
    for s in stations {
        for &fuel in fuels {
            let base = match fuel {
                FuelKind::E5 => 1.45,
                FuelKind::E10 => 1.40,
                FuelKind::Diesel => 1.20,
            };
            let mut t = start;
            let mut p: f64 = base + rng.random_range(-0.08..=0.08);
            while t <= now {
                out.push(PriceEvent {
                    station_id: s.station_id.clone(),
                    fuel,
                    price: (p * 1000.0).round() / 1000.0,
                    effective_from: t,
                });
                t += rng.random_range(6..=36) * 3_600_000;
                p = (p + rng.random_range(-0.03..=0.03)).clamp(base - 0.15, base + 0.15);
            }
        }
    }
    out
}
