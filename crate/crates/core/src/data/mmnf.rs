//! The `MMNF` feature-file format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes  "MMNF"
//! version      u32      1
//! num_samples  u64
//! modalities   u32
//! per modality:
//!   layers     u32
//!   dims       u32 × layers
//! num_labels   u32      0 when the file carries no labels
//! payload      f32 × n × dim, one block per (modality, layer), row-major
//! labels       u8 × n × num_labels, each 0 or 1
//! ```
//!
//! The reader requires the payload length to match the header exactly and
//! rejects non-finite values.

use std::fs;
use std::path::Path;

use super::dataset::{Dataset, Labels};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MMNF";
pub const VERSION: u32 = 1;

/// Serializes `dataset`. Values are narrowed to `f32`.
pub fn encode(dataset: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    out.extend_from_slice(&(dataset.num_modalities() as u32).to_le_bytes());
    for dims in dataset.layout() {
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    let num_labels = dataset.labels().map_or(0, Labels::num_labels);
    out.extend_from_slice(&(num_labels as u32).to_le_bytes());
    for (m, dims) in dataset.layout().iter().enumerate() {
        for l in 0..dims.len() {
            for &v in dataset.block(m, l) {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    if let Some(labels) = dataset.labels() {
        out.extend_from_slice(labels.bits());
    }
    out
}

pub fn write(path: &Path, dataset: &Dataset) -> Result<()> {
    fs::write(path, encode(dataset)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn error(&self, detail: impl Into<String>) -> Error {
        Error::Parse {
            what: "MMNF",
            offset: self.pos as u64,
            detail: detail.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(format!(
                "truncated while reading {what}: need {n} bytes, {} remain",
                self.bytes.len() - self.pos
            )));
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

pub fn decode(bytes: &[u8]) -> Result<Dataset> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        c.pos = 0;
        return Err(c.error("bad magic"));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        c.pos = 4;
        return Err(c.error(format!("unsupported version {version}")));
    }
    let n = c.u64("sample count")?;
    let modalities = c.u32("modality count")?;
    let mut layout = Vec::new();
    for _ in 0..modalities {
        let layers = c.u32("layer count")?;
        let mut dims = Vec::new();
        for _ in 0..layers {
            dims.push(c.u32("layer dim")? as usize);
        }
        layout.push(dims);
    }
    let num_labels = c.u32("label count")? as usize;

    // Header arithmetic in u128 so corrupt counts cannot overflow.
    let width: u128 = layout.iter().flatten().map(|&d| d as u128).sum();
    let expected = c.pos as u128 + n as u128 * (4 * width + num_labels as u128);
    if expected != bytes.len() as u128 {
        let detail = format!("header implies {expected} bytes, file has {}", bytes.len());
        if (bytes.len() as u128) < expected {
            c.pos = bytes.len();
            return Err(c.error(format!("truncated payload: {detail}")));
        }
        c.pos = expected as usize;
        return Err(c.error(format!("trailing bytes: {detail}")));
    }
    let n = n as usize;
    let mut features = Vec::new();
    for dims in &layout {
        let mut blocks = Vec::new();
        for &d in dims {
            let start = c.pos;
            let raw = c.take(n * d * 4, "feature block")?;
            let mut block = Vec::with_capacity(n * d);
            for (i, chunk) in raw.chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                if !v.is_finite() {
                    c.pos = start + 4 * i;
                    return Err(c.error("non-finite feature value"));
                }
                block.push(f64::from(v));
            }
            blocks.push(block);
        }
        features.push(blocks);
    }
    let labels = if num_labels > 0 {
        let start = c.pos;
        let raw = c.take(n * num_labels, "label block")?;
        if let Some(i) = raw.iter().position(|&b| b > 1) {
            c.pos = start + i;
            return Err(c.error(format!("label byte {} is not 0 or 1", raw[i])));
        }
        Some(Labels::new(num_labels, raw.to_vec())?)
    } else {
        None
    };
    Dataset::new(layout, features, labels, (0..n as u64).collect()).map_err(|e| Error::Parse {
        what: "MMNF",
        offset: 0,
        detail: e.to_string(),
    })
}
