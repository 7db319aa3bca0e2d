use libm::{asin, cos, sin, sqrt};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        GeoPoint { lat, lon }
    }
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = sin(dp / 2.0) * sin(dp / 2.0) + cos(p1) * cos(p2) * sin(dl / 2.0) * sin(dl / 2.0);
    2.0 * EARTH_RADIUS_KM * asin(sqrt(h.min(1.0)))
}

/// Latitude/longitude box containing every point within `radius_km` of
/// `c`. Returns one box, or two when it wraps around the antimeridian.
pub(crate) fn radius_boxes(c: GeoPoint, radius_km: f64) -> ([f64; 4], Option<[f64; 4]>) {
    const EPS: f64 = 1e-9;
    let delta = radius_km / EARTH_RADIUS_KM;
    let dlat = delta.to_degrees() + EPS;
    let (lat_lo, lat_hi) = (c.lat - dlat, c.lat + dlat);
    let full = |lo: f64, hi: f64| ([lo.max(-90.0), -180.0, hi.min(90.0), 180.0], None);
    if lat_lo <= -90.0 || lat_hi >= 90.0 || delta >= core::f64::consts::FRAC_PI_2 {
        return full(lat_lo, lat_hi);
    }
    let s = sin(delta) / cos(c.lat.to_radians());
    if s >= 1.0 {
        return full(lat_lo, lat_hi);
    }
    let dlon = asin(s).to_degrees() + EPS;
    let (lo, hi) = (c.lon - dlon, c.lon + dlon);
    if lo < -180.0 {
        (
            [lat_lo, lo + 360.0, lat_hi, 180.0],
            Some([lat_lo, -180.0, lat_hi, hi]),
        )
    } else if hi > 180.0 {
        (
            [lat_lo, lo, lat_hi, 180.0],
            Some([lat_lo, -180.0, lat_hi, hi - 360.0]),
        )
    } else {
        ([lat_lo, lo, lat_hi, hi], None)
    }
}
