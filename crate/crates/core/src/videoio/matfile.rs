//! `DGM1` matrix files: the 4-byte magic `DGM1`, then `n1`, `n2`, `m` as
//! little-endian u64, then the `n1*n2 x m` matrix as row-major little-endian
//! f64.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::DataMatrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DGM1";
const HEADER_LEN: usize = 4 + 3 * 8;

pub fn write_matrix(path: &Path, data: &DataMatrix) -> Result<()> {
    let (n1, n2, m) = data.shape();
    let v = data.values();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * v.len());
    out.extend_from_slice(MAGIC);
    for d in [n1, n2, m] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for i in 0..v.nrows() {
        for j in 0..m {
            out.extend_from_slice(&v[(i, j)].to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DataMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "missing DGM1 header"));
    }
    let dim = |k: usize| {
        let raw: [u8; 8] = bytes[4 + 8 * k..12 + 8 * k].try_into().unwrap();
        usize::try_from(u64::from_le_bytes(raw))
            .map_err(|_| Error::format(path, "dimension does not fit in memory"))
    };
    let (n1, n2, m) = (dim(0)?, dim(1)?, dim(2)?);
    let count = n1
        .checked_mul(n2)
        .and_then(|n| n.checked_mul(m))
        .ok_or_else(|| Error::format(path, "dimensions overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 8 {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, expected {}", payload.len(), count * 8),
        ));
    }
    let row_major = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let values = DMatrix::from_row_iterator(n1 * n2, m, row_major);
    DataMatrix::new(values, n1, n2)
}
