//! The `MMNW` weight-checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic    4 bytes  "MMNW"
//! version  u32      1
//! count    u32
//! per parameter, in store order:
//!   name_len u32, name (UTF-8)
//!   rank     u32, dims u64 × rank
//!   data     f64 × product(dims)
//! ```

use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub const MAGIC: &[u8; 4] = b"MMNW";
pub const VERSION: u32 = 1;

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn error_at(offset: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        what: "MMNW",
        offset: offset as u64,
        detail: detail.into(),
    }
}

impl<'a> Reader<'a> {
    fn error(&self, detail: impl Into<String>) -> Error {
        error_at(self.pos, detail)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < n {
            return Err(self.error(format!("truncated while reading {what}: need {n} bytes, {remaining} remain")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        r.pos = 0;
        return Err(r.error("bad magic"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        r.pos = 4;
        return Err(r.error(format!("unsupported version {version}")));
    }
    let count = r.u32("parameter count")?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let start = r.pos;
        let len = r.u32("name length")? as usize;
        let name_at = r.pos;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| error_at(name_at, "parameter name is not UTF-8"))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u64("dimension")? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| r.error(format!("implausible shape {shape:?} for {name}")))?;
        let data_at = r.pos;
        let raw = r.take(numel * 8, "tensor data")?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = if shape.is_empty() {
            if !data[0].is_finite() {
                return Err(error_at(data_at, format!("non-finite value in {name}")));
            }
            Tensor::scalar(data[0])
        } else {
            Tensor::new(shape, data).map_err(|e| error_at(data_at, format!("{name}: {e}")))?
        };
        store
            .add(name, tensor)
            .map_err(|e| error_at(start, e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(r.error(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(store)
}

pub fn write(path: &Path, store: &ParamStore) -> Result<()> {
    fs::write(path, encode(store)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<ParamStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
