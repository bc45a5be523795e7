//! Binary tensor checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MEMALNCK"                      8 bytes
//! version                         u32
//! section count                   u32
//! per section: name length u32, name bytes, offset u64, length u64
//! per section payload at its offset:
//!     rank u64, rank × dim u64, row-major f32 values
//! FNV-1a 64 of every preceding byte   u64
//! ```

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

use crate::seed::fnv1a64;

pub const MAGIC: &[u8; 8] = b"MEMALNCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self { shape, data }
    }

    /// Rounds `f64` values to the stored `f32` precision.
    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Self {
        Self { shape, data: data.iter().map(|&v| v as f32).collect() }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    fn expected_len(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic {0:?}")]
    BadMagic(Vec<u8>),
    #[error("unsupported version {0} (expected {VERSION})")]
    Version(u32),
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("truncated {0}")]
    Truncated(String),
    #[error("duplicate section name {0:?}")]
    DuplicateName(String),
    #[error("section {name:?}: shape {shape:?} needs {expected} values, found {found}")]
    Shape { name: String, shape: Vec<usize>, expected: usize, found: usize },
    #[error("section name is not UTF-8")]
    Name,
    #[error("missing section {0:?}")]
    MissingSection(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub fn encode_checkpoint(sections: &[(String, Tensor)]) -> Result<Vec<u8>, CheckpointError> {
    let mut names = HashSet::new();
    for (name, t) in sections {
        if !names.insert(name.as_str()) {
            return Err(CheckpointError::DuplicateName(name.clone()));
        }
        if t.expected_len() != t.data.len() {
            return Err(CheckpointError::Shape {
                name: name.clone(),
                shape: t.shape.clone(),
                expected: t.expected_len(),
                found: t.data.len(),
            });
        }
    }
    let table_len: usize = sections.iter().map(|(n, _)| 4 + n.len() + 16).sum();
    let mut offset = (MAGIC.len() + 8 + table_len) as u64;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for (name, t) in sections {
        let len = (8 + 8 * t.shape.len() + 4 * t.data.len()) as u64;
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        offset += len;
    }
    for (_, t) in sections {
        out.extend_from_slice(&(t.shape.len() as u64).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = fnv1a64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CheckpointError::Truncated(what.to_string()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor)>, CheckpointError> {
    if bytes.len() < MAGIC.len() {
        return Err(CheckpointError::Truncated("magic".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic(bytes[..8].to_vec()));
    }
    if bytes.len() < MAGIC.len() + 8 + 8 {
        return Err(CheckpointError::Truncated("header".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(trailer.try_into().expect("8 bytes"));
    let computed = fnv1a64(body);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    let mut cur = Cursor { bytes: body, pos: 8 };
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = cur.u32("section count")? as usize;
    let mut table = Vec::with_capacity(count.min(1024));
    let mut names = HashSet::new();
    for _ in 0..count {
        let len = cur.u32("section name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "section name")?).map_err(|_| CheckpointError::Name)?.to_string();
        if !names.insert(name.clone()) {
            return Err(CheckpointError::DuplicateName(name));
        }
        let offset = cur.u64("section offset")?;
        let length = cur.u64("section length")?;
        table.push((name, offset, length));
    }
    let mut out = Vec::with_capacity(table.len());
    for (name, offset, length) in table {
        let start = usize::try_from(offset).map_err(|_| CheckpointError::Truncated(format!("section {name:?}")))?;
        let len = usize::try_from(length).map_err(|_| CheckpointError::Truncated(format!("section {name:?}")))?;
        let mut sec = Cursor { bytes: body, pos: start };
        let payload = sec.take(len, &format!("section {name:?}"))?;
        let mut p = Cursor { bytes: payload, pos: 0 };
        let rank = p.u64("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(p.u64("dimension")? as usize);
        }
        let expected = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let values = (payload.len() - p.pos) / 4;
        if expected != Some(values) || (payload.len() - p.pos) % 4 != 0 {
            return Err(CheckpointError::Shape { name, shape, expected: expected.unwrap_or(usize::MAX), found: values });
        }
        let data = payload[p.pos..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        out.push((name, Tensor { shape, data }));
    }
    Ok(out)
}

pub fn save_checkpoint(sections: &[(String, Tensor)], path: &Path) -> Result<(), CheckpointError> {
    let bytes = encode_checkpoint(sections)?;
    std::fs::write(path, bytes).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    decode_checkpoint(&bytes)
}

/// The tensor stored under `name`.
pub fn section<'a>(sections: &'a [(String, Tensor)], name: &str) -> Result<&'a Tensor, CheckpointError> {
    sections.iter().find(|(n, _)| n == name).map(|(_, t)| t).ok_or_else(|| CheckpointError::MissingSection(name.into()))
}
