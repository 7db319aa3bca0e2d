use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

/// One vehicle message as sent by the phone app.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleReading {
    pub vehicle_id: String,
    /// Epoch milliseconds.
    pub timestamp: i64,
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
    /// OBD values by name, as strings. Which keys exist depends on the car.
    pub readings: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Wire {
    altitude: f64,
    latitude: f64,
    longitude: f64,
    #[serde(default)]
    readings: BTreeMap<String, String>,
    timestamp: i64,
    vehicleid: String,
}

pub const FUEL_LEVEL: &str = "FUEL_LEVEL";
pub const ENGINE_RPM: &str = "ENGINE_RPM";

/// Decimal percentage with an optional trailing `%`.
pub fn parse_percent(s: &str) -> Option<f64> {
    let s = s.trim();
    let s = s.strip_suffix('%').unwrap_or(s).trim_end();
    let v: f64 = s.parse().ok()?;
    v.is_finite().then_some(v)
}

impl VehicleReading {
    /// Fuel level in percent, if reported and readable.
    pub fn fuel_level(&self) -> Option<f64> {
        self.readings.get(FUEL_LEVEL).and_then(|s| parse_percent(s))
    }

    pub fn to_json(&self) -> String {
        let w = Wire {
            altitude: self.altitude,
            latitude: self.latitude,
            longitude: self.longitude,
            readings: self.readings.clone(),
            timestamp: self.timestamp,
            vehicleid: self.vehicle_id.clone(),
        };
        serde_json::to_string(&w).expect("reading serializes")
    }
}

/// Decodes one message. The error text is what goes to the dead-letter
/// topic.
pub fn parse_vehicle_reading(payload: &[u8]) -> Result<VehicleReading, String> {
    let w: Wire = serde_json::from_slice(payload).map_err(|e| e.to_string())?;
    if !(-90.0..=90.0).contains(&w.latitude) {
        return Err(format!("latitude {} out of range", w.latitude));
    }
    if !(-180.0..=180.0).contains(&w.longitude) {
        return Err(format!("longitude {} out of range", w.longitude));
    }
    if let Some(f) = w.readings.get(FUEL_LEVEL).and_then(|s| parse_percent(s)) {
        if !(0.0..=100.0).contains(&f) {
            return Err(format!("fuel level {f} out of range"));
        }
    }
    Ok(VehicleReading {
        vehicle_id: w.vehicleid,
        timestamp: w.timestamp,
        latitude: w.latitude,
        longitude: w.longitude,
        altitude: w.altitude,
        readings: w.readings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{"altitude": 112.5, "latitude": 52.52, "longitude": 13.405,
        "readings": {"FUEL_LEVEL": "43.5", "ENGINE_RPM": "2100"},
        "timestamp": 1431950400000, "vehicleid": "car-7"}"#;

    #[test]
    fn parses_message() {
        let r = parse_vehicle_reading(DOC.as_bytes()).unwrap();
        assert_eq!(r.vehicle_id, "car-7");
        assert_eq!(r.fuel_level(), Some(43.5));
        assert_eq!(r.readings[ENGINE_RPM], "2100");
        assert_eq!(parse_vehicle_reading(r.to_json().as_bytes()).unwrap(), r);
    }

    #[test]
    fn missing_fuel_is_tolerated() {
        let doc = r#"{"altitude":0,"latitude":1,"longitude":2,"readings":{"ENGINE_RPM":"900"},"timestamp":5,"vehicleid":"v"}"#;
        assert_eq!(
            parse_vehicle_reading(doc.as_bytes()).unwrap().fuel_level(),
            None
        );
        let doc = r#"{"altitude":0,"latitude":1,"longitude":2,"timestamp":5,"vehicleid":"v"}"#;
        assert!(parse_vehicle_reading(doc.as_bytes())
            .unwrap()
            .readings
            .is_empty());
    }

    #[test]
    fn rejects_bad_documents() {
        let doc = r#"{"altitude":0,"latitude":91,"longitude":2,"timestamp":5,"vehicleid":"v"}"#;
        assert!(parse_vehicle_reading(doc.as_bytes())
            .unwrap_err()
            .contains("latitude"));
        assert!(parse_vehicle_reading(b"{").is_err());
        let doc = r#"{"altitude":0,"latitude":1,"longitude":2,"readings":{"FUEL_LEVEL":"120"},"timestamp":5,"vehicleid":"v"}"#;
        assert!(parse_vehicle_reading(doc.as_bytes()).is_err());
    }

    #[test]
    fn percent_forms() {
        assert_eq!(parse_percent("49.9"), Some(49.9));
        assert_eq!(parse_percent(" 12 %"), Some(12.0));
        assert_eq!(parse_percent("12,5"), None);
        assert_eq!(parse_percent("NaN"), None);
    }
}
