//! Feature file format (little-endian):
//! - magic: `GVF1`
//! - T: u64, D: u64
//! - data: T * D f32, row-major

use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GVF1";
const HEADER_LEN: usize = 4 + 8 + 8;

pub fn encode_features(rows: usize, dim: usize, data: &[f32]) -> Result<Vec<u8>> {
    if rows == 0 || dim == 0 {
        return Err(Error::Invariant(format!("feature matrix {rows}x{dim} is empty")));
    }
    if data.len() != rows * dim {
        return Err(Error::Shape(format!(
            "{} values for a {rows}x{dim} matrix",
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(dim as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Returns `(T, D, data)`.
pub fn decode_features(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "bad magic, expected GVF1"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated header"));
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let dim = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if rows == 0 || dim == 0 {
        return Err(Error::format(path, format!("empty matrix {rows}x{dim}")));
    }
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(path, "matrix size overflows"))?;
    let body = &bytes[HEADER_LEN..];
    if (body.len() as u64) < expected {
        return Err(Error::format(
            path,
            format!("truncated data: {} of {expected} bytes", body.len()),
        ));
    }
    if body.len() as u64 > expected {
        return Err(Error::format(path, "trailing bytes after data"));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows as usize, dim as usize, data))
}

pub fn store_features(path: &Path, rows: usize, dim: usize, data: &[f32]) -> Result<()> {
    write_atomic(path, &encode_features(rows, dim, data)?)
}

pub fn load_features(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}
