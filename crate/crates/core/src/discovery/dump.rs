//! `CEMB1` embedding dumps.
//!
//! Layout, all little-endian: magic `CEMB1`, `u32` item count, `u32`
//! dimension, `count · dim` row-major `f32` values, then one `i32` class id
//! per item (`-1` when unlabeled).

use std::fs;
use std::path::Path;

use crate::{Error, Result};

const MAGIC: &[u8; 5] = b"CEMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDump {
    dim: usize,
    values: Vec<f32>,
    labels: Vec<Option<u32>>,
}

impl EmbeddingDump {
    /// Rows are stored at `f32` precision.
    pub fn new(rows: &[Vec<f64>], labels: Vec<Option<u32>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { left: dim, right: r.len() });
        }
        if labels.iter().flatten().any(|&l| l > i32::MAX as u32) {
            return Err(Error::InvalidArgument("class id does not fit in i32".into()));
        }
        Ok(Self {
            dim,
            values: rows.iter().flatten().map(|&v| v as f32).collect(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[Option<u32>] {
        &self.labels
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        if self.dim == 0 {
            return vec![Vec::new(); self.len()];
        }
        self.values
            .chunks_exact(self.dim)
            .map(|r| r.iter().map(|&v| f64::from(v)).collect())
            .collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 4 * (self.values.len() + self.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.labels {
            let id = l.map_or(-1, |l| l as i32);
            out.extend_from_slice(&id.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: String| Error::malformed("embedding dump", reason);
        let body = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| bad("missing CEMB1 magic".into()))?;
        if body.len() < 8 {
            return Err(bad("truncated header".into()));
        }
        let count = u32::from_le_bytes(body[..4].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(body[4..8].try_into().unwrap()) as usize;
        let expected = count
            .checked_mul(dim)
            .and_then(|v| v.checked_add(count))
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| bad("size overflow".into()))?;
        let data = &body[8..];
        if data.len() != expected {
            return Err(bad(format!(
                "{count} items of dimension {dim} need {expected} bytes, found {}",
                data.len()
            )));
        }
        let (vals, labs) = data.split_at(4 * count * dim);
        let values: Vec<f32> = vals
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        let labels = labs
            .chunks_exact(4)
            .map(|c| match i32::from_le_bytes(c.try_into().unwrap()) {
                -1 => Ok(None),
                l if l >= 0 => Ok(Some(l as u32)),
                l => Err(bad(format!("invalid class id {l}"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { dim, values, labels })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
