//! Binary field snapshots.
//!
//! Layout, all little-endian:
//!
//! | bytes | content                         |
//! |-------|---------------------------------|
//! | 8     | magic `LOGSPFLD`                |
//! | 4     | `u32` format version (1)        |
//! | 4     | `u32` dimension                 |
//! | 8     | `f64` half-width `L`            |
//! | 8     | `u64` points per axis `N`       |
//! | 8     | `f64` time                      |
//! | 16 each | `f64` real, `f64` imaginary; node `(x_i, y_j)` at flat index `i N + j` |

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{make_grid, Field};

pub const MAGIC: &[u8; 8] = b"LOGSPFLD";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 40;

/// File name used for the snapshot at time `t`.
pub fn snapshot_name(t: f64) -> String {
    format!("field_{t:.6}.bin")
}

pub fn encode(u: &Field, t: f64) -> Vec<u8> {
    let grid = u.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * grid.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dimension() as u32).to_le_bytes());
    out.extend_from_slice(&grid.half_width().to_le_bytes());
    out.extend_from_slice(&(grid.points_per_axis() as u64).to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    for z in u.values() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<(Field, f64)> {
    let bad = |msg: &str| Error::Config(format!("invalid snapshot: {msg}"));
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(bad("missing header"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    if u32_at(8) != VERSION {
        return Err(bad("unsupported version"));
    }
    let dim = u32_at(12) as usize;
    let l = f64_at(16);
    let n = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;
    let t = f64_at(32);
    let grid = make_grid(dim, l, n)?;
    if bytes.len() != HEADER_LEN + 16 * grid.len() {
        return Err(bad("payload length does not match header"));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok((Field::new(grid, values)?, t))
}

/// Write `field_<t>.bin` into `dir`, via a temporary file and rename.
pub fn write_snapshot(dir: &Path, u: &Field, t: f64) -> Result<PathBuf> {
    let path = dir.join(snapshot_name(t));
    let tmp = path.with_extension("bin.tmp");
    fs::write(&tmp, encode(u, t)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_snapshot(path: &Path) -> Result<(Field, f64)> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
