//! Binary encoding of [`Value`]s for checkpoints and logs.
//!
//! Integers are little-endian and fixed width; strings, byte strings and
//! lists carry a `u32` length prefix. Objects cannot be encoded.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("object values cannot be encoded")]
    Unencodable,
    #[error("input ended early")]
    Truncated,
    #[error("unknown tag {0}")]
    BadTag(u8),
    #[error("bad magic or unsupported version")]
    BadHeader,
    #[error("invalid utf-8")]
    Utf8,
}

pub fn put_u8(out: &mut Vec<u8>, v: u8) {
    out.push(v);
}

pub fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len() as u32);
    out.extend_from_slice(b);
}

/// Cursor over an encoded buffer.
pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() < n {
            return Err(CodecError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(a))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn header(&mut self, magic: &[u8; 4], version: u8) -> Result<(), CodecError> {
        if self.take(4)? != magic || self.u8()? != version {
            return Err(CodecError::BadHeader);
        }
        Ok(())
    }
}

pub fn put_header(out: &mut Vec<u8>, magic: &[u8; 4], version: u8) {
    out.extend_from_slice(magic);
    out.push(version);
}

pub fn encode_value(v: &Value, out: &mut Vec<u8>) -> Result<(), CodecError> {
    match v {
        Value::Unit => put_u8(out, 0),
        Value::Bool(b) => {
            put_u8(out, 1);
            put_u8(out, *b as u8);
        }
        Value::Int(i) => {
            put_u8(out, 2);
            put_u64(out, *i as u64);
        }
        Value::Float(f) => {
            put_u8(out, 3);
            put_u64(out, f.to_bits());
        }
        Value::Str(s) => {
            put_u8(out, 4);
            put_bytes(out, s.as_bytes());
        }
        Value::Bytes(b) => {
            put_u8(out, 5);
            put_bytes(out, b);
        }
        Value::Pair(p) => {
            put_u8(out, 6);
            encode_value(&p.0, out)?;
            encode_value(&p.1, out)?;
        }
        Value::List(l) => {
            put_u8(out, 7);
            put_u32(out, l.len() as u32);
            for x in l.iter() {
                encode_value(x, out)?;
            }
        }
        Value::Object(_) => return Err(CodecError::Unencodable),
    }
    Ok(())
}

pub fn decode_value(r: &mut Reader<'_>) -> Result<Value, CodecError> {
    Ok(match r.u8()? {
        0 => Value::Unit,
        1 => Value::Bool(r.u8()? != 0),
        2 => Value::Int(r.u64()? as i64),
        3 => Value::Float(f64::from_bits(r.u64()?)),
        4 => {
            let s = core::str::from_utf8(r.bytes()?).map_err(|_| CodecError::Utf8)?;
            Value::Str(Arc::from(s))
        }
        5 => Value::Bytes(Arc::from(r.bytes()?)),
        6 => {
            let a = decode_value(r)?;
            let b = decode_value(r)?;
            Value::pair(a, b)
        }
        7 => {
            let n = r.u32()? as usize;
            let mut items = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                items.push(decode_value(r)?);
            }
            Value::list(items)
        }
        t => return Err(CodecError::BadTag(t)),
    })
}

/// Parses `key=value` lines into pairs, skipping blank lines.
pub fn parse_meta(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (String::from(k.trim()), String::from(v.trim())))
        .collect()
}
