use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::wal::{decode_wal, encode_wal_record, wal_header, WalRecord};
use crate::codec::{
    decode_value, encode_value, parse_meta, put_bytes, put_header, put_u32, put_u64, CodecError,
    Reader,
};
use crate::engine::{StateEntry, StatePartition};

pub const STATE_MAGIC: &[u8; 4] = b"TCKP";
pub const STATE_VERSION: u8 = 1;

/// Keyed state of one stateful operator, one map per state partition.
pub type OperatorState = Vec<Arc<StatePartition>>;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointImage {
    pub checkpoint_ts: u64,
    pub last_batch: u64,
    /// Highest WAL sequence number whose record belongs to a batch at or
    /// before `last_batch`.
    pub wal_high_water: u64,
    /// State per stateful operator, keyed by operator id.
    pub states: BTreeMap<u32, OperatorState>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StorageError {
    #[error("storage unavailable: {0}")]
    Unavailable(String),
    #[error("corrupt data: {0}")]
    Corrupt(#[from] CodecError),
}

/// Durable home of the write-ahead log and checkpoints. Survives driver
/// restarts.
pub trait DurableStorage: Send {
    fn wal_append(&mut self, rec: &WalRecord) -> Result<(), StorageError>;
    fn wal_records(&self) -> Result<Vec<WalRecord>, StorageError>;
    /// Drops records received before `ts`.
    fn wal_truncate_before(&mut self, ts: u64) -> Result<(), StorageError>;
    fn write_checkpoint(&mut self, image: &CheckpointImage) -> Result<(), StorageError>;
    fn latest_checkpoint(&self) -> Result<Option<CheckpointImage>, StorageError>;
}

/// Binary state file: header, operator table, then one length-prefixed frame
/// per key.
pub fn encode_state(states: &BTreeMap<u32, OperatorState>) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    put_header(&mut out, STATE_MAGIC, STATE_VERSION);
    put_u32(&mut out, states.len() as u32);
    for (op, parts) in states {
        put_u32(&mut out, *op);
        put_u32(&mut out, parts.len() as u32);
    }
    for (op, parts) in states {
        for (p, part) in parts.iter().enumerate() {
            for (key, entry) in part.iter() {
                let mut body = Vec::new();
                put_u32(&mut body, *op);
                put_u32(&mut body, p as u32);
                encode_value(key, &mut body)?;
                encode_value(&entry.state, &mut body)?;
                put_u64(&mut body, entry.last_update_ms);
                put_bytes(&mut out, &body);
            }
        }
    }
    Ok(out)
}

pub fn decode_state(buf: &[u8]) -> Result<BTreeMap<u32, OperatorState>, CodecError> {
    let mut r = Reader::new(buf);
    r.header(STATE_MAGIC, STATE_VERSION)?;
    let ops = r.u32()?;
    let mut maps: BTreeMap<u32, Vec<StatePartition>> = BTreeMap::new();
    for _ in 0..ops {
        let op = r.u32()?;
        let n = r.u32()? as usize;
        maps.insert(op, (0..n).map(|_| StatePartition::new()).collect());
    }
    while !r.is_empty() {
        let mut b = Reader::new(r.bytes()?);
        let op = b.u32()?;
        let p = b.u32()? as usize;
        let key = decode_value(&mut b)?;
        let state = decode_value(&mut b)?;
        let last_update_ms = b.u64()?;
        let part = maps
            .get_mut(&op)
            .and_then(|parts| parts.get_mut(p))
            .ok_or(CodecError::Truncated)?;
        part.insert(
            key,
            StateEntry {
                state,
                last_update_ms,
            },
        );
    }
    Ok(maps
        .into_iter()
        .map(|(op, parts)| (op, parts.into_iter().map(Arc::new).collect()))
        .collect())
}

pub fn encode_meta(image: &CheckpointImage) -> String {
    format!(
        "version={}\ncheckpoint_ts={}\nwal_high_water={}\nlast_batch={}\n",
        STATE_VERSION, image.checkpoint_ts, image.wal_high_water, image.last_batch
    )
}

/// Returns `(checkpoint_ts, wal_high_water, last_batch)`.
pub fn decode_meta(text: &str) -> Result<(u64, u64, u64), CodecError> {
    let kv = parse_meta(text);
    let get = |k: &str| -> Result<u64, CodecError> {
        kv.iter()
            .find(|(key, _)| key == k)
            .and_then(|(_, v)| v.parse().ok())
            .ok_or(CodecError::BadHeader)
    };
    if get("version")? != u64::from(STATE_VERSION) {
        return Err(CodecError::BadHeader);
    }
    Ok((
        get("checkpoint_ts")?,
        get("wal_high_water")?,
        get("last_batch")?,
    ))
}

/// In-memory storage that still encodes everything, so round trips are
/// exercised. Failures can be switched on for tests.
#[derive(Debug)]
pub struct MemoryStorage {
    wal: Vec<u8>,
    checkpoints: Vec<(String, Vec<u8>)>,
    pub fail_checkpoints: bool,
    pub fail_wal: bool,
}

impl Default for MemoryStorage {
    fn default() -> Self {
        MemoryStorage {
            wal: wal_header(),
            checkpoints: Vec::new(),
            fail_checkpoints: false,
            fail_wal: false,
        }
    }
}

impl MemoryStorage {
    pub fn new() -> Self {
        MemoryStorage::default()
    }

    pub fn checkpoint_count(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn checkpoint_times(&self) -> Vec<u64> {
        self.checkpoints
            .iter()
            .filter_map(|(m, _)| decode_meta(m).ok().map(|t| t.0))
            .collect()
    }
}

impl DurableStorage for MemoryStorage {
    fn wal_append(&mut self, rec: &WalRecord) -> Result<(), StorageError> {
        if self.fail_wal {
            return Err(StorageError::Unavailable(String::from("wal disabled")));
        }
        encode_wal_record(rec, &mut self.wal);
        Ok(())
    }

    fn wal_records(&self) -> Result<Vec<WalRecord>, StorageError> {
        Ok(decode_wal(&self.wal)?)
    }

    fn wal_truncate_before(&mut self, ts: u64) -> Result<(), StorageError> {
        let keep = decode_wal(&self.wal)?;
        let mut wal = wal_header();
        for r in keep.iter().filter(|r| r.receive_ts >= ts) {
            encode_wal_record(r, &mut wal);
        }
        self.wal = wal;
        Ok(())
    }

    fn write_checkpoint(&mut self, image: &CheckpointImage) -> Result<(), StorageError> {
        if self.fail_checkpoints {
            return Err(StorageError::Unavailable(String::from(
                "checkpoint store disabled",
            )));
        }
        let state = encode_state(&image.states)?;
        self.checkpoints.push((encode_meta(image), state));
        Ok(())
    }

    fn latest_checkpoint(&self) -> Result<Option<CheckpointImage>, StorageError> {
        let Some((meta, state)) = self.checkpoints.last() else {
            return Ok(None);
        };
        let (checkpoint_ts, wal_high_water, last_batch) = decode_meta(meta)?;
        Ok(Some(CheckpointImage {
            checkpoint_ts,
            last_batch,
            wal_high_water,
            states: decode_state(state)?,
        }))
    }
}
