//! WAMF: a minimal little-endian float64 array container.
//!
//! ```text
//! "WAMF" | version = 1 | dtype = 1 (f64 LE) | ndim ∈ {1,2,3} | pad = 0
//! ndim × u32 LE extents | row-major f64 LE payload
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Result, WamError};
use crate::signal::Signal;

const MAGIC: &[u8; 4] = b"WAMF";
const VERSION: u8 = 1;
const DTYPE_F64_LE: u8 = 1;
const HEADER_LEN: usize = 8;

pub fn encode_wamf(signal: &Signal) -> Vec<u8> {
    let shape = signal.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * shape.len() + 8 * signal.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, DTYPE_F64_LE, shape.len() as u8, 0]);
    for &n in shape {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for v in signal.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_wamf(bytes: &[u8], origin: &Path) -> Result<Signal> {
    let bad = |reason: &str| WamError::format(origin, reason);
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("missing WAMF magic"));
    }
    if bytes[4] != VERSION {
        return Err(bad(&format!("unsupported version {}", bytes[4])));
    }
    if bytes[5] != DTYPE_F64_LE {
        return Err(bad(&format!("unsupported dtype {}", bytes[5])));
    }
    let ndim = bytes[6] as usize;
    if !(1..=3).contains(&ndim) {
        return Err(bad(&format!("ndim {ndim} outside 1..=3")));
    }
    if bytes[7] != 0 {
        return Err(bad("nonzero pad byte"));
    }
    let dims_end = HEADER_LEN + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(bad("truncated shape"));
    }
    let shape: Vec<usize> = bytes[HEADER_LEN..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count: usize = shape.iter().product();
    let payload = &bytes[dims_end..];
    if payload.len() != 8 * count {
        return Err(bad(&format!(
            "payload holds {} bytes, expected {}",
            payload.len(),
            8 * count
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Signal::new(shape, data)
}

pub fn write_wamf(path: &Path, signal: &Signal) -> Result<()> {
    fs::write(path, encode_wamf(signal))?;
    Ok(())
}

pub fn read_wamf(path: &Path) -> Result<Signal> {
    decode_wamf(&fs::read(path)?, path)
}
