use std::collections::BTreeMap;

use theta::data::{
    format_timestamp, parse_timestamp, random_price_history, random_stations, read_prices,
    read_readings, read_stations, write_prices, write_stations, Region,
};
use theta::filestore::{read_log, FileImmutableStore};
use theta::Error;
use theta_core::cis::{FuelKind, VehicleReading};
use theta_core::theta::ImmutableStore;

#[test]
fn store_log_replays_on_open() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.log");
    let mut s = FileImmutableStore::open(&path).unwrap();
    assert_eq!(s.append("a", b"one", 10).unwrap(), 0);
    assert_eq!(s.append("b", b"{\"x\":1}", 11).unwrap(), 0);
    assert_eq!(s.append("a", b"two", 12).unwrap(), 1);
    drop(s);

    let mut s = FileImmutableStore::open(&path).unwrap();
    assert_eq!(s.len("a"), 2);
    assert_eq!(s.len("b"), 1);
    assert_eq!(s.append("a", b"three", 13).unwrap(), 2);
    let a: Vec<(u64, Vec<u8>, u64)> = s
        .scan("a", &|_| true)
        .iter()
        .map(|r| (r.seq, r.payload.to_vec(), r.append_ts))
        .collect();
    assert_eq!(
        a,
        vec![
            (0, b"one".to_vec(), 10),
            (1, b"two".to_vec(), 12),
            (2, b"three".to_vec(), 13)
        ]
    );
    assert_eq!(s.scan("a", &|r| r.append_ts > 11).len(), 2);
    assert!(s.scan("missing", &|_| true).is_empty());
    assert_eq!(read_log(&path).unwrap().len(), 4);
}

#[test]
fn damaged_store_log_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.log");
    let mut s = FileImmutableStore::open(&path).unwrap();
    s.append("a", b"payload", 1).unwrap();
    drop(s);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.pop();
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        FileImmutableStore::open(&path),
        Err(Error::Record { .. })
    ));

    std::fs::write(&path, b"JUNK").unwrap();
    assert!(FileImmutableStore::open(&path).is_err());
}

#[test]
fn stations_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stations.csv");
    let stations = random_stations(50, Region::default(), 1);
    write_stations(&path, &stations).unwrap();
    assert_eq!(read_stations(&path).unwrap(), stations);
}

#[test]
fn prices_round_trip_with_iso_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prices.csv");
    let stations = random_stations(5, Region::default(), 2);
    let now = parse_timestamp("2016-06-01T00:00:00Z").unwrap();
    let events = random_price_history(&stations, &[FuelKind::E5, FuelKind::Diesel], now, 14, 2);
    assert!(events.iter().all(|e| e.effective_from <= now));
    write_prices(&path, &events).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("station_id,fuel,price,effective_from\n"));
    assert!(text.lines().nth(1).unwrap().ends_with('Z'));
    assert_eq!(read_prices(&path).unwrap(), events);
}

#[test]
fn timestamps_are_rfc3339() {
    assert_eq!(
        parse_timestamp("2016-06-01T00:00:00Z").unwrap(),
        1_464_739_200_000
    );
    assert_eq!(
        parse_timestamp("2016-06-01T02:00:00.250+02:00").unwrap(),
        1_464_739_200_250
    );
    assert_eq!(
        format_timestamp(1_464_739_200_250),
        "2016-06-01T00:00:00.250Z"
    );
    assert!(parse_timestamp("01.06.2016").is_err());
}

#[test]
fn bad_rows_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stations.csv");
    std::fs::write(&path, "id,lat,lon\n1,2,3\n").unwrap();
    let err = read_stations(&path).unwrap_err().to_string();
    assert!(err.contains("stations.csv"), "{err}");
    assert!(err.contains("header"), "{err}");

    std::fs::write(
        &path,
        "station_id,name,latitude,longitude\na,A,50.0,8.0\nb,B,95.0,8.0\n",
    )
    .unwrap();
    let err = read_stations(&path).unwrap_err();
    assert!(matches!(err, Error::Record { line: 3, .. }), "{err}");

    let prices = dir.path().join("prices.csv");
    std::fs::write(
        &prices,
        "station_id,fuel,price,effective_from\na,e5,1.5,yesterday\n",
    )
    .unwrap();
    assert!(matches!(
        read_prices(&prices).unwrap_err(),
        Error::Record { line: 2, .. }
    ));
    std::fs::write(
        &prices,
        "station_id,fuel,price,effective_from\na,kerosene,1.5,2016-06-01T00:00:00Z\n",
    )
    .unwrap();
    assert!(matches!(
        read_prices(&prices).unwrap_err(),
        Error::Record { line: 2, .. }
    ));
}

#[test]
fn readings_from_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("readings.jsonl");
    let reading = VehicleReading {
        vehicle_id: "v1".into(),
        timestamp: 1_464_739_200_000,
        latitude: 50.1,
        longitude: 8.6,
        altitude: 120.0,
        readings: BTreeMap::from([("FUEL_LEVEL".to_string(), "30%".to_string())]),
    };
    std::fs::write(
        &path,
        format!("{}\n\n{}\n", reading.to_json(), reading.to_json()),
    )
    .unwrap();
    let got = read_readings(&path).unwrap();
    assert_eq!(got, vec![reading.clone(), reading]);
    assert_eq!(got[0].fuel_level(), Some(30.0));

    std::fs::write(&path, "{\"vehicleid\": 1}\n").unwrap();
    assert!(matches!(
        read_readings(&path).unwrap_err(),
        Error::Record { line: 1, .. }
    ));
}
