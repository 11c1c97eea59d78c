//! Binary dump of a [`PathBundle`].
//!
//! Little-endian layout: magic `BSDEPATH` (8 bytes), format version `u32`,
//! `T: f64`, `N: u64`, `d: u64`, `M: u64`, `seed: u64`, path mode `u32`
//! (0 independent, 1 nested), then the `M * N * d` increments as `f64` in
//! row-major `(m, i, component)` order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use bsdelab_core::stochastic::{make_grid, PathBundle, PathMode};

use crate::error::{LabError, Result};

pub const MAGIC: &[u8; 8] = b"BSDEPATH";
pub const VERSION: u32 = 1;

pub fn write_paths(bundle: &PathBundle, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&bundle.grid().horizon().to_le_bytes())?;
    for v in [bundle.grid().n_steps() as u64, bundle.dim() as u64, bundle.paths() as u64, bundle.seed()] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mode: u32 = match bundle.mode() {
        PathMode::Independent => 0,
        PathMode::Nested => 1,
    };
    w.write_all(&mode.to_le_bytes())?;
    for x in bundle.increments() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn take<const K: usize>(r: &mut impl Read) -> std::io::Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_paths(r: &mut impl Read) -> Result<PathBundle> {
    let bad = |what: &str| LabError::Format(format!("path dump: {what}"));
    let io = |e: std::io::Error| LabError::Format(format!("path dump: {e}"));
    if &take::<8>(r).map_err(io)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(r).map_err(io)?);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let horizon = f64::from_le_bytes(take(r).map_err(io)?);
    let mut dims = [0u64; 4];
    for v in &mut dims {
        *v = u64::from_le_bytes(take(r).map_err(io)?);
    }
    let [n, d, m, seed] = dims;
    let mode = match u32::from_le_bytes(take(r).map_err(io)?) {
        0 => PathMode::Independent,
        1 => PathMode::Nested,
        k => return Err(bad(&format!("unknown path mode {k}"))),
    };
    let len = n.checked_mul(d).and_then(|x| x.checked_mul(m)).ok_or_else(|| bad("size overflow"))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io)?;
    if bytes.len() as u64 != len * 8 {
        return Err(bad(&format!("expected {len} increments, found {} bytes", bytes.len())));
    }
    let increments = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let grid = make_grid(horizon, n as usize)?;
    Ok(PathBundle::from_increments(grid, d as usize, m as usize, seed, mode, increments)?)
}

pub fn save(bundle: &PathBundle, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_paths(bundle, &mut w).and_then(|_| w.flush()).map_err(|e| LabError::io(path, e))
}

pub fn load(path: &Path) -> Result<PathBundle> {
    let f = File::open(path).map_err(|e| LabError::io(path, e))?;
    read_paths(&mut BufReader::new(f))
}
