use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::codec::{put_bytes, put_header, put_u32, put_u64, CodecError, Reader};
use crate::theta::MessageId;

pub const WAL_MAGIC: &[u8; 4] = b"TWAL";
pub const WAL_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalRecord {
    /// Strictly increasing across the application's lifetime.
    pub seq: u64,
    pub message_id: MessageId,
    pub receiver: u32,
    pub payload: Arc<[u8]>,
    pub receive_ts: u64,
}

pub fn wal_header() -> Vec<u8> {
    let mut out = Vec::new();
    put_header(&mut out, WAL_MAGIC, WAL_VERSION);
    out
}

/// Appends one length-prefixed record frame.
pub fn encode_wal_record(rec: &WalRecord, out: &mut Vec<u8>) {
    let mut body = Vec::with_capacity(32 + rec.payload.len());
    put_u64(&mut body, rec.seq);
    put_u64(&mut body, rec.message_id.0);
    put_u32(&mut body, rec.receiver);
    put_u64(&mut body, rec.receive_ts);
    put_bytes(&mut body, &rec.payload);
    put_bytes(out, &body);
}

/// Decodes a whole WAL buffer, header included.
pub fn decode_wal(buf: &[u8]) -> Result<Vec<WalRecord>, CodecError> {
    let mut r = Reader::new(buf);
    r.header(WAL_MAGIC, WAL_VERSION)?;
    let mut out = Vec::new();
    while !r.is_empty() {
        let mut b = Reader::new(r.bytes()?);
        out.push(WalRecord {
            seq: b.u64()?,
            message_id: MessageId(b.u64()?),
            receiver: b.u32()?,
            receive_ts: b.u64()?,
            payload: Arc::from(b.bytes()?),
        });
    }
    Ok(out)
}
