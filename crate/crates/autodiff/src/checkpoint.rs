//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"KTCKPT01"
//! u32 header length, header bytes (UTF-8, free-form, usually JSON)
//! u32 tensor count
//! per tensor, in name order:
//!   u32 name length, name bytes
//!   u32 rank, rank x u64 dims
//!   f64 values, row-major
//! ```
//!
//! Only parameter values are stored; optimiser moments are not.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{EngineError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"KTCKPT01";

pub fn encode(store: &ParamStore, header: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| EngineError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| EngineError::Format(e.to_string()))
    }
}

/// Parses bytes produced by [`encode`], returning the header and a store
/// with fresh optimiser state.
pub fn decode(bytes: &[u8]) -> Result<(String, ParamStore)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(MAGIC.len())? != MAGIC {
        return Err(EngineError::Format("bad magic".into()));
    }
    let header = cur.string()?;
    let count = cur.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = cur.string()?;
        let rank = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(usize::try_from(cur.u64()?).map_err(|e| EngineError::Format(e.to_string()))?);
        }
        let n: usize = shape.iter().product();
        let raw = cur.take(n.checked_mul(8).ok_or_else(|| EngineError::Format("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| EngineError::Format(format!("tensor `{name}`: {e}")))?;
        if store.contains(&name) {
            return Err(EngineError::Format(format!("duplicate tensor `{name}`")));
        }
        store.insert(name, t);
    }
    if cur.pos != bytes.len() {
        return Err(EngineError::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok((header, store))
}

pub fn save(store: &ParamStore, header: &str, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(store, header))?;
    f.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(String, ParamStore)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
