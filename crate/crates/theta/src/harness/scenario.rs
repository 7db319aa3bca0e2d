//! Load profiles: which vehicles send, where they are, how full the tank is.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use theta_core::cis::{VehicleReading, ENGINE_RPM, FUEL_LEVEL};

use crate::data::Region;

/// Epoch of virtual time zero, 2016-06-01T00:00:00Z.
pub const BASE_EPOCH_MS: i64 = 1_464_739_200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Every message from the same vehicle.
    Ls1,
    /// `n` vehicles, each about once per second.
    Ls2(u32),
    /// Every message from a new vehicle.
    Ls3,
    /// New vehicles that all need fuel, so each one runs the station search.
    GasSearch,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioKind::Ls1 => f.write_str("ls1"),
            ScenarioKind::Ls2(n) => write!(f, "ls2:{n}"),
            ScenarioKind::Ls3 => f.write_str("ls3"),
            ScenarioKind::GasSearch => f.write_str("gas-search"),
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    /// `ls1`, `ls2` (1000 vehicles), `ls2:<n>`, `ls3` or `gas-search`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ls1" => Ok(ScenarioKind::Ls1),
            "ls2" => Ok(ScenarioKind::Ls2(1000)),
            "ls3" => Ok(ScenarioKind::Ls3),
            "gas-search" => Ok(ScenarioKind::GasSearch),
            other => match other.strip_prefix("ls2:").map(str::parse::<u32>) {
                Some(Ok(n)) if n > 0 => Ok(ScenarioKind::Ls2(n)),
                _ => Err(format!("unknown scenario {other}")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadScenario {
    pub kind: ScenarioKind,
    pub region: Region,
    /// Fuel levels are drawn uniformly from this range, in percent.
    pub fuel_pct: (f64, f64),
}

impl LoadScenario {
    pub fn new(kind: ScenarioKind) -> Self {
        let fuel_pct = match kind {
            ScenarioKind::GasSearch => (5.0, 45.0),
            _ => (5.0, 95.0),
        };
        LoadScenario {
            kind,
            region: Region::default(),
            fuel_pct,
        }
    }
}

/// One message as it goes onto the broker.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    /// Virtual publish time.
    pub ts: u64,
    pub payload: String,
}

#[derive(Debug, Clone)]
struct Vehicle {
    lat: f64,
    lon: f64,
    fuel: f64,
}

/// Seeded message source for one scenario.
#[derive(Debug)]
pub struct Generator {
    scenario: LoadScenario,
    rng: ChaCha8Rng,
    seq: u64,
    fleet: Vec<Vehicle>,
    next_vehicle: usize,
}

const JITTER_MS: i64 = 100;
/// Random-walk step of a driving vehicle per message, in degrees.
const WALK_DEG: f64 = 0.0003;

impl Generator {
    pub fn new(scenario: LoadScenario, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fleet_size = match scenario.kind {
            ScenarioKind::Ls1 => 1,
            ScenarioKind::Ls2(n) => n as usize,
            _ => 0,
        };
        let fleet = (0..fleet_size)
            .map(|_| {
                let (lat, lon) = scenario.region.sample(&mut rng);
                let fuel = rng.random_range(scenario.fuel_pct.0..=scenario.fuel_pct.1);
                Vehicle { lat, lon, fuel }
            })
            .collect();
        Generator {
            scenario,
            rng,
            seq: 0,
            fleet,
            next_vehicle: 0,
        }
    }

    pub fn scenario(&self) -> &LoadScenario {
        &self.scenario
    }

    /// Messages sent so far.
    pub fn sent(&self) -> u64 {
        self.seq
    }

    /// Exactly `rate` messages for the virtual second starting at `start`,
    /// ordered by timestamp.
    pub fn second(&mut self, start: u64, rate: u32) -> Vec<Message> {
        let mut out: Vec<Message> = (0..rate as u64)
            .map(|i| {
                let even = start + i * 1000 / rate as u64;
                let ts = match self.scenario.kind {
                    ScenarioKind::Ls2(_) => {
                        let j = self.rng.random_range(-JITTER_MS..=JITTER_MS);
                        (even as i64 + j).clamp(start as i64, start as i64 + 999) as u64
                    }
                    _ => even,
                };
                self.message(ts)
            })
            .collect();
        out.sort_by_key(|m| m.ts);
        out
    }

    fn message(&mut self, ts: u64) -> Message {
        let seq = self.seq;
        self.seq += 1;
        let (id, lat, lon, fuel) = match self.scenario.kind {
            ScenarioKind::Ls1 | ScenarioKind::Ls2(_) => {
                let k = self.next_vehicle;
                self.next_vehicle = (k + 1) % self.fleet.len();
                let dlat = self.rng.random_range(-WALK_DEG..=WALK_DEG);
                let dlon = self.rng.random_range(-WALK_DEG..=WALK_DEG);
                let burn = self.rng.random_range(0.0..0.01);
                let v = &mut self.fleet[k];
                v.lat = (v.lat + dlat).clamp(-90.0, 90.0);
                v.lon = (v.lon + dlon).clamp(-180.0, 180.0);
                v.fuel = (v.fuel - burn).max(0.0);
                let prefix = if self.scenario.kind == ScenarioKind::Ls1 {
                    "ls1"
                } else {
                    "ls2"
                };
                (format!("{prefix}-{k}"), v.lat, v.lon, v.fuel)
            }
            ScenarioKind::Ls3 | ScenarioKind::GasSearch => {
                let (lat, lon) = self.scenario.region.sample(&mut self.rng);
                let fuel = self
                    .rng
                    .random_range(self.scenario.fuel_pct.0..=self.scenario.fuel_pct.1);
                let prefix = if self.scenario.kind == ScenarioKind::Ls3 {
                    "ls3"
                } else {
                    "gs"
                };
                (format!("{prefix}-{seq}"), lat, lon, fuel)
            }
        };
        let mut readings = BTreeMap::new();
        readings.insert(FUEL_LEVEL.to_string(), format!("{fuel:.1}"));
        readings.insert(
            ENGINE_RPM.to_string(),
            self.rng.random_range(800..4000).to_string(),
        );
        let r = VehicleReading {
            vehicle_id: id,
            timestamp: BASE_EPOCH_MS + ts as i64,
            latitude: round6(lat),
            longitude: round6(lon),
            altitude: f64::from(self.rng.random_range(50..600)),
            readings,
        };
        Message {
            ts,
            payload: r.to_json(),
        }
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}
