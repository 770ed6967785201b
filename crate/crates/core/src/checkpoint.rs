//! Binary snapshots of a coefficient field.
//!
//! Layout, all little-endian: magic `VFPD`, `u32` version, `u64` mode count,
//! `u64` cell count, then the coefficients as `f64` in mode-major order
//! (`index = k * n_cells + j`).

use std::fs;
use std::path::Path;

use crate::error::{Result, VfpError};
use crate::hermite::CoefficientField;

pub const MAGIC: [u8; 4] = *b"VFPD";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub fn encode(d: &CoefficientField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * d.as_slice().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(d.n_modes() as u64).to_le_bytes());
    out.extend_from_slice(&(d.n_cells() as u64).to_le_bytes());
    for x in d.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<CoefficientField> {
    let bad = |msg: &str| VfpError::invalid(format!("checkpoint: {msg}"));
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n_modes = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let n_cells = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let count = n_modes
        .checked_mul(n_cells)
        .ok_or_else(|| bad("dimension overflow"))?;
    if bytes.len() != HEADER_LEN + 8 * count {
        return Err(bad(&format!(
            "expected {} payload bytes, found {}",
            8 * count,
            bytes.len() - HEADER_LEN
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    CoefficientField::from_flat(n_modes, n_cells, data)
}

pub fn write(path: &Path, d: &CoefficientField) -> Result<()> {
    fs::write(path, encode(d)).map_err(|e| VfpError::io(path, "write checkpoint", e))
}

pub fn read(path: &Path) -> Result<CoefficientField> {
    let bytes = fs::read(path).map_err(|e| VfpError::io(path, "read checkpoint", e))?;
    decode(&bytes)
}
