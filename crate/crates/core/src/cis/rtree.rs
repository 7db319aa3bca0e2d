//! Static R-tree over gas stations, bulk-loaded with Sort-Tile-Recursive.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use super::geo::{haversine_km, radius_boxes, GeoPoint};
use super::CisError;

const FANOUT: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GasStation {
    pub station_id: String,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
}

impl GasStation {
    pub fn position(&self) -> GeoPoint {
        GeoPoint::new(self.latitude, self.longitude)
    }
}

/// `[min_lat, min_lon, max_lat, max_lon]`
type Rect = [f64; 4];

fn overlaps(a: &Rect, b: &Rect) -> bool {
    a[0] <= b[2] && b[0] <= a[2] && a[1] <= b[3] && b[1] <= a[3]
}

fn contains(r: &Rect, lat: f64, lon: f64) -> bool {
    r[0] <= lat && lat <= r[2] && r[1] <= lon && lon <= r[3]
}

fn union(rects: impl Iterator<Item = Rect>) -> Rect {
    rects.fold([f64::MAX, f64::MAX, f64::MIN, f64::MIN], |a, b| {
        [
            a[0].min(b[0]),
            a[1].min(b[1]),
            a[2].max(b[2]),
            a[3].max(b[3]),
        ]
    })
}

#[derive(Debug)]
enum Children {
    Leaf(Vec<usize>),
    Inner(Vec<usize>),
}

#[derive(Debug)]
struct Node {
    rect: Rect,
    children: Children,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nearby {
    pub station: usize,
    pub distance_km: f64,
}

/// Immutable after build; queries only bump the instrumentation counters.
#[derive(Debug)]
pub struct StationIndex {
    stations: Vec<GasStation>,
    nodes: Vec<Node>,
    root: Option<usize>,
    queries: AtomicU64,
    visits: AtomicU64,
}

/// Packs `items` (rect, payload) into groups of at most `FANOUT`, tiling by
/// longitude slices and then latitude.
fn str_pack(mut items: Vec<(Rect, usize)>) -> Vec<Vec<(Rect, usize)>> {
    let n = items.len();
    let pages = n.div_ceil(FANOUT);
    let slices = libm::ceil(libm::sqrt(pages as f64)) as usize;
    let per_slice = slices.max(1) * FANOUT;
    let center = |r: &Rect, i: usize| (r[i] + r[i + 2]) / 2.0;
    items.sort_by(|a, b| {
        center(&a.0, 1)
            .total_cmp(&center(&b.0, 1))
            .then(a.1.cmp(&b.1))
    });
    let mut groups = Vec::new();
    for slice in items.chunks_mut(per_slice) {
        slice.sort_by(|a, b| {
            center(&a.0, 0)
                .total_cmp(&center(&b.0, 0))
                .then(a.1.cmp(&b.1))
        });
        groups.extend(slice.chunks(FANOUT).map(|c| c.to_vec()));
    }
    groups
}

impl StationIndex {
    pub fn build(stations: Vec<GasStation>) -> Result<Self, CisError> {
        let mut seen = BTreeSet::new();
        for s in &stations {
            if !seen.insert(s.station_id.as_str()) {
                return Err(CisError::DuplicateStationId(s.station_id.clone()));
            }
        }
        let mut nodes = Vec::new();
        let mut level: Vec<(Rect, usize)> = stations
            .iter()
            .enumerate()
            .map(|(i, s)| ([s.latitude, s.longitude, s.latitude, s.longitude], i))
            .collect();
        let mut leaf = true;
        let root = loop {
            if level.is_empty() {
                break None;
            }
            let mut next = Vec::new();
            for group in str_pack(level) {
                let rect = union(group.iter().map(|g| g.0));
                let ids = group.into_iter().map(|g| g.1).collect();
                let children = if leaf {
                    Children::Leaf(ids)
                } else {
                    Children::Inner(ids)
                };
                nodes.push(Node { rect, children });
                next.push((rect, nodes.len() - 1));
            }
            leaf = false;
            if next.len() == 1 {
                break Some(next[0].1);
            }
            level = next;
        };
        Ok(StationIndex {
            stations,
            nodes,
            root,
            queries: AtomicU64::new(0),
            visits: AtomicU64::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn station(&self, i: usize) -> &GasStation {
        &self.stations[i]
    }

    pub fn stations(&self) -> &[GasStation] {
        &self.stations
    }

    /// Stations within `radius_km`, nearest first, ties by id, plus the number
    /// of index entries examined.
    pub fn nearby_counted(&self, at: GeoPoint, radius_km: f64) -> (Vec<Nearby>, u64) {
        let mut out = Vec::new();
        let mut visits = 0u64;
        if let Some(root) = self.root {
            let (a, b) = radius_boxes(at, radius_km);
            for rect in core::iter::once(a).chain(b) {
                let mut stack = alloc::vec![root];
                while let Some(n) = stack.pop() {
                    let node = &self.nodes[n];
                    match &node.children {
                        Children::Inner(kids) => {
                            for k in kids {
                                visits += 1;
                                if overlaps(&self.nodes[*k].rect, &rect) {
                                    stack.push(*k);
                                }
                            }
                        }
                        Children::Leaf(ids) => {
                            for i in ids {
                                visits += 1;
                                let s = &self.stations[*i];
                                if contains(&rect, s.latitude, s.longitude) {
                                    let d = haversine_km(at, s.position());
                                    if d <= radius_km {
                                        out.push(Nearby {
                                            station: *i,
                                            distance_km: d,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out.sort_by(|x, y| {
            x.distance_km.total_cmp(&y.distance_km).then_with(|| {
                self.stations[x.station]
                    .station_id
                    .cmp(&self.stations[y.station].station_id)
            })
        });
        out.dedup_by_key(|n| n.station);
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.visits.fetch_add(visits, Ordering::Relaxed);
        (out, visits)
    }

    pub fn nearby(&self, at: GeoPoint, radius_km: f64) -> Vec<Nearby> {
        self.nearby_counted(at, radius_km).0
    }

    /// `(queries, entries examined)` since build.
    pub fn query_stats(&self) -> (u64, u64) {
        (
            self.queries.load(Ordering::Relaxed),
            self.visits.load(Ordering::Relaxed),
        )
    }
}

/// Reference answer: check every station.
pub fn linear_scan(stations: &[GasStation], at: GeoPoint, radius_km: f64) -> Vec<usize> {
    stations
        .iter()
        .enumerate()
        .filter(|(_, s)| haversine_km(at, s.position()) <= radius_km)
        .map(|(i, _)| i)
        .collect()
}
