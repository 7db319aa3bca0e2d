//! Checkpoints and write-ahead log on the local file system.
//!
//! Layout: `<dir>/wal.log` plus one `<dir>/ckpt-<ts>/` directory per
//! checkpoint holding `state.bin` and `meta`.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use theta_core::stream::{
    decode_meta, decode_state, decode_wal, encode_meta, encode_state, encode_wal_record,
    wal_header, CheckpointImage, DurableStorage, StorageError, WalRecord,
};

#[derive(Debug)]
pub struct DirStorage {
    dir: PathBuf,
}

fn unavailable(path: &Path, e: std::io::Error) -> StorageError {
    StorageError::Unavailable(format!("{}: {e}", path.display()))
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
fn replace_file(path: &Path, bytes: &[u8]) -> Result<(), StorageError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| unavailable(&tmp, e))?;
    f.write_all(bytes).map_err(|e| unavailable(&tmp, e))?;
    f.sync_all().map_err(|e| unavailable(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| unavailable(path, e))
}

impl DirStorage {
    /// Opens or creates the storage directory.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| unavailable(&dir, e))?;
        let wal = dir.join("wal.log");
        if !wal.exists() {
            replace_file(&wal, &wal_header())?;
        }
        Ok(DirStorage { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn wal_path(&self) -> PathBuf {
        self.dir.join("wal.log")
    }

    /// Checkpoint timestamps on disk, oldest first.
    pub fn checkpoint_times(&self) -> Result<Vec<u64>, StorageError> {
        let mut out = Vec::new();
        let entries = fs::read_dir(&self.dir).map_err(|e| unavailable(&self.dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| unavailable(&self.dir, e))?;
            let name = entry.file_name();
            let Some(ts) = name
                .to_str()
                .and_then(|n| n.strip_prefix("ckpt-"))
                .and_then(|t| t.parse().ok())
            else {
                continue;
            };
            if entry.path().join("meta").exists() {
                out.push(ts);
            }
        }
        out.sort_unstable();
        Ok(out)
    }
}

impl DurableStorage for DirStorage {
    fn wal_append(&mut self, rec: &WalRecord) -> Result<(), StorageError> {
        let path = self.wal_path();
        let mut frame = Vec::new();
        encode_wal_record(rec, &mut frame);
        let mut f = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| unavailable(&path, e))?;
        f.write_all(&frame).map_err(|e| unavailable(&path, e))
    }

    fn wal_records(&self) -> Result<Vec<WalRecord>, StorageError> {
        let path = self.wal_path();
        let buf = fs::read(&path).map_err(|e| unavailable(&path, e))?;
        Ok(decode_wal(&buf)?)
    }

    fn wal_truncate_before(&mut self, ts: u64) -> Result<(), StorageError> {
        let mut buf = wal_header();
        for r in self.wal_records()?.iter().filter(|r| r.receive_ts >= ts) {
            encode_wal_record(r, &mut buf);
        }
        replace_file(&self.wal_path(), &buf)
    }

    fn write_checkpoint(&mut self, image: &CheckpointImage) -> Result<(), StorageError> {
        let dir = self.dir.join(format!("ckpt-{}", image.checkpoint_ts));
        fs::create_dir_all(&dir).map_err(|e| unavailable(&dir, e))?;
        replace_file(&dir.join("state.bin"), &encode_state(&image.states)?)?;
        // The meta file is written last; a checkpoint without it is ignored.
        replace_file(&dir.join("meta"), encode_meta(image).as_bytes())
    }

    fn latest_checkpoint(&self) -> Result<Option<CheckpointImage>, StorageError> {
        let Some(ts) = self.checkpoint_times()?.pop() else {
            return Ok(None);
        };
        let dir = self.dir.join(format!("ckpt-{ts}"));
        let meta = fs::read_to_string(dir.join("meta")).map_err(|e| unavailable(&dir, e))?;
        let state = fs::read(dir.join("state.bin")).map_err(|e| unavailable(&dir, e))?;
        let (checkpoint_ts, wal_high_water, last_batch) = decode_meta(&meta)?;
        Ok(Some(CheckpointImage {
            checkpoint_ts,
            last_batch,
            wal_high_water,
            states: decode_state(&state)?,
        }))
    }
}
