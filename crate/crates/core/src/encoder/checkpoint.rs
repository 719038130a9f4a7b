//! `CENC1` checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 5     | magic `CENC1` |
//! | 4     | `u32` length `L` of the architecture string |
//! | L     | UTF-8 architecture string (see [`EncoderSpec`]) |
//! | 4·P   | every parameter block in layer order, weights then biases, as `f32` |
//! | 4     | `u32` CRC-32 (IEEE) of every byte between the magic and the CRC |

use std::fs;
use std::path::Path;

use super::{EncoderParams, EncoderSpec, ParamBlock};
use crate::{Error, Result};

const MAGIC: &[u8; 5] = b"CENC1";

pub fn encode_checkpoint(params: &EncoderParams) -> Vec<u8> {
    let arch = params.spec().to_string();
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + arch.len() + 4 * params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    out.extend_from_slice(arch.as_bytes());
    for block in params.blocks() {
        for v in block.weights.iter().chain(&block.bias) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[MAGIC.len()..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<EncoderParams> {
    let bad = |reason: &str| Error::malformed("checkpoint", reason.to_string());
    let body = bytes
        .strip_prefix(MAGIC.as_slice())
        .ok_or_else(|| bad("missing CENC1 magic"))?;
    if body.len() < 8 {
        return Err(bad("truncated"));
    }
    let (payload, crc) = body.split_at(body.len() - 4);
    let stored = u32::from_le_bytes(crc.try_into().unwrap());
    if crc32fast::hash(payload) != stored {
        return Err(bad("CRC mismatch"));
    }

    let arch_len = u32::from_le_bytes(payload[..4].try_into().unwrap()) as usize;
    let rest = &payload[4..];
    if arch_len > rest.len() {
        return Err(bad("architecture length exceeds file"));
    }
    let (arch, data) = rest.split_at(arch_len);
    let arch = std::str::from_utf8(arch).map_err(|_| bad("architecture is not UTF-8"))?;
    let spec: EncoderSpec = arch.parse()?;

    let sizes = spec.block_sizes();
    let total: usize = sizes.iter().map(|(w, b)| w + b).sum();
    if data.len() != 4 * total {
        return Err(Error::malformed(
            "checkpoint",
            format!(
                "architecture needs {total} parameters, file holds {} bytes of data",
                data.len()
            ),
        ));
    }
    let mut values = data
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())));
    let blocks = sizes
        .iter()
        .map(|&(w, b)| ParamBlock {
            weights: values.by_ref().take(w).collect(),
            bias: values.by_ref().take(b).collect(),
        })
        .collect();
    EncoderParams::from_blocks(spec, blocks)
}

pub fn save_checkpoint(params: &EncoderParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EncoderParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
