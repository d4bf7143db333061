//! Binary weight checkpoints.
//!
//! Layout, little-endian: `b"GSGD"`, `u32` version, `u32` depth `L`,
//! `L + 1` widths as `u32`, then one `f64` per edge in edge order.

use std::path::Path;

use crate::arch::Architecture;
use crate::error::{Error, Result};
use crate::nn::WeightVector;

const MAGIC: &[u8; 4] = b"GSGD";
pub const VERSION: u32 = 1;

pub fn encode(arch: &Architecture, w: &WeightVector) -> Vec<u8> {
    let widths = arch.widths();
    let mut out = Vec::with_capacity(12 + 4 * widths.len() + 8 * w.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(arch.depth() as u32).to_le_bytes());
    for &h in widths {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    for &x in w.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(Architecture, WeightVector)> {
    let truncated = |what: &str| Error::Truncated {
        path: path.to_path_buf(),
        msg: format!("checkpoint ends inside {what}"),
    };
    let word = |at: usize, what: &str| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .ok_or_else(|| truncated(what))
    };
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "missing GSGD magic".into(),
        });
    }
    let version = word(4, "version")?;
    if version != VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("unsupported checkpoint version {version}"),
        });
    }
    let depth = word(8, "depth")? as usize;
    let widths = (0..=depth)
        .map(|i| word(12 + 4 * i, "widths").map(|h| h as usize))
        .collect::<Result<Vec<_>>>()?;
    let arch = Architecture::new(widths)?;
    let start = 12 + 4 * (depth + 1);
    let m = arch.num_edges();
    let payload = bytes
        .get(start..start + 8 * m)
        .ok_or_else(|| truncated("weights"))?;
    if bytes.len() != start + 8 * m {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("{} trailing bytes", bytes.len() - start - 8 * m),
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let w = WeightVector::new(&arch, values)?;
    Ok((arch, w))
}

pub fn save(path: &Path, arch: &Architecture, w: &WeightVector) -> Result<()> {
    std::fs::write(path, encode(arch, w)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Architecture, WeightVector)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
