//! Per-tick run metrics and their CSV form.

use std::path::Path;

use serde::Serialize;

use crate::error::{io_err, Error, Result};

/// One row per virtual second. `received` and `processed` are running
/// totals; `batch_ms` is the processing time of the last finished batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReportRow {
    pub ts: u64,
    pub target_rate: u32,
    pub received: u64,
    pub processed: u64,
    pub batch_ms: u64,
    pub waiting_batches: usize,
    pub workers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
}

pub const HEADER: [&str; 7] = [
    "ts",
    "target_rate",
    "received",
    "processed",
    "batch_ms",
    "waiting_batches",
    "workers",
];

impl RunReport {
    pub fn push(&mut self, row: ReportRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.ts <= row.ts));
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: RunReport) {
        self.rows.extend(other.rows);
    }

    /// Received messages per row, from the running totals.
    pub fn received_deltas(&self) -> Vec<u64> {
        let mut prev = 0;
        self.rows
            .iter()
            .map(|r| {
                let d = r.received.saturating_sub(prev);
                prev = r.received;
                d
            })
            .collect()
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for r in &self.rows {
            w.serialize(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(io_err(path))
    }

    pub fn read_csv(path: &Path) -> Result<RunReport> {
        let mut rdr = csv::Reader::from_path(path).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?;
            let num = |i: usize| -> Result<u64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Record {
                        path: path.to_path_buf(),
                        line: rec.position().map_or(0, |p| p.line()),
                        reason: format!("bad {} field", HEADER[i]),
                    })
            };
            rows.push(ReportRow {
                ts: num(0)?,
                target_rate: num(1)? as u32,
                received: num(2)?,
                processed: num(3)?,
                batch_ms: num(4)?,
                waiting_batches: num(5)? as usize,
                workers: num(6)? as usize,
            });
        }
        Ok(RunReport { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(ts: u64) -> ReportRow {
        ReportRow {
            ts,
            target_rate: 500,
            received: ts,
            processed: ts / 2,
            batch_ms: 12,
            waiting_batches: 0,
            workers: 2,
        }
    }

    #[test]
    fn header_only_when_empty() {
        let csv = RunReport::default().to_csv();
        assert_eq!(
            csv,
            b"ts,target_rate,received,processed,batch_ms,waiting_batches,workers\n"
        );
    }

    #[test]
    fn one_line_per_tick() {
        let mut r = RunReport::default();
        for t in 1..=10 {
            r.push(row(t * 1000));
        }
        let text = String::from_utf8(r.to_csv()).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().nth(1), Some("1000,500,1000,500,12,0,2"));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut r = RunReport::default();
        r.push(row(1000));
        r.push(row(2000));
        r.write_csv(&path).unwrap();
        assert_eq!(RunReport::read_csv(&path).unwrap(), r);
        assert_eq!(r.received_deltas(), vec![1000, 1000]);
    }
}
