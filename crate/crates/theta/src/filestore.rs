//! Append-only immutable store backed by a log file.
//!
//! The file starts with the magic `TIMS` and a version byte, followed by one
//! frame per record: a little-endian `u32` length and a JSON object.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use theta_core::theta::{ImmutableRecord, ImmutableStore, MemoryStore, StoreError};

use crate::error::{io_err, Error, Result};

pub const STORE_MAGIC: &[u8; 4] = b"TIMS";
pub const STORE_VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct Frame {
    collection: String,
    seq: u64,
    append_ts: u64,
    payload: String,
}

/// Keeps an in-memory copy for scans; every append goes to the file first.
#[derive(Debug)]
pub struct FileImmutableStore {
    path: PathBuf,
    file: File,
    mem: MemoryStore,
}

impl FileImmutableStore {
    /// Opens the log at `path`, replaying existing records, or creates it.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut mem = MemoryStore::new();
        if path.exists() {
            for rec in read_log(&path)? {
                mem.restore(rec);
            }
        } else {
            let mut head = STORE_MAGIC.to_vec();
            head.push(STORE_VERSION);
            fs::write(&path, head).map_err(io_err(&path))?;
        }
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(FileImmutableStore { path, file, mem })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Reads every record of a store log.
pub fn read_log(path: &Path) -> Result<Vec<ImmutableRecord>> {
    let buf = fs::read(path).map_err(io_err(path))?;
    let corrupt = |reason: &str| Error::Record {
        path: path.to_path_buf(),
        line: 0,
        reason: reason.to_string(),
    };
    if buf.len() < 5 || &buf[..4] != STORE_MAGIC {
        return Err(corrupt("not an immutable store log"));
    }
    if buf[4] != STORE_VERSION {
        return Err(corrupt("unsupported store log version"));
    }
    let mut out = Vec::new();
    let mut at = 5;
    while at < buf.len() {
        let len_bytes: [u8; 4] = buf
            .get(at..at + 4)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| corrupt("truncated frame header"))?;
        let len = u32::from_le_bytes(len_bytes) as usize;
        let body = buf
            .get(at + 4..at + 4 + len)
            .ok_or_else(|| corrupt("truncated frame"))?;
        let f: Frame = serde_json::from_slice(body).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        out.push(ImmutableRecord {
            collection: Arc::from(f.collection.as_str()),
            seq: f.seq,
            payload: Arc::from(f.payload.into_bytes()),
            append_ts: f.append_ts,
        });
        at += 4 + len;
    }
    Ok(out)
}

impl ImmutableStore for FileImmutableStore {
    fn append(
        &mut self,
        collection: &str,
        payload: &[u8],
        now: u64,
    ) -> std::result::Result<u64, StoreError> {
        let text = std::str::from_utf8(payload)
            .map_err(|_| StoreError::Io("payload is not UTF-8".into()))?;
        let frame = Frame {
            collection: collection.to_string(),
            seq: self.mem.len(collection),
            append_ts: now,
            payload: text.to_string(),
        };
        let body = serde_json::to_vec(&frame).map_err(|e| StoreError::Io(e.to_string()))?;
        let mut buf = (body.len() as u32).to_le_bytes().to_vec();
        buf.extend_from_slice(&body);
        self.file
            .write_all(&buf)
            .map_err(|e| StoreError::Io(format!("{}: {e}", self.path.display())))?;
        self.mem.append(collection, payload, now)
    }

    fn scan(
        &self,
        collection: &str,
        pred: &dyn Fn(&ImmutableRecord) -> bool,
    ) -> Vec<ImmutableRecord> {
        self.mem.scan(collection, pred)
    }

    fn len(&self, collection: &str) -> u64 {
        self.mem.len(collection)
    }
}
