//! Time grids and Brownian path bundles.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{CounterRng, DrawKey};

/// Default cap on `M * N * d` stored increments (1 GiB of f64).
pub const DEFAULT_MAX_ELEMENTS: u128 = 1 << 27;

/// Uniform time grid `0 = t_0 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// `t_{i+1} - t_i`.
    pub fn step(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.nodes[i] + self.nodes[i + 1])
    }
}

/// Builds the uniform grid with `n` steps on `[0, horizon]`.
pub fn make_grid(horizon: f64, n: usize) -> Result<TimeGrid> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("number of steps must be positive".into()));
    }
    let h = horizon / n as f64;
    let mut nodes: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    // Pin the last node so t_N == T exactly.
    nodes[n] = horizon;
    Ok(TimeGrid { horizon, nodes })
}

/// How increments are drawn from the counter-based stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    /// Increment `(m, i, c)` is `sqrt(dt) * normal(seed; m, i, c)`.
    #[default]
    Independent,
    /// Brownian-bridge construction from `B_T` downwards. Requires `N` to be a
    /// power of two; bundles with `N` and `2N` steps share node values.
    Nested,
}

/// `M` Brownian paths of dimension `d` on a time grid, stored as increments
/// in row-major `(m, i, component)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    grid: TimeGrid,
    dim: usize,
    paths: usize,
    seed: u64,
    mode: PathMode,
    increments: Vec<f64>,
}

fn check_shape(grid: &TimeGrid, dim: usize, paths: usize, cap: u128) -> Result<usize> {
    if dim == 0 || dim > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!("dimension must be in 1..=65535, got {dim}")));
    }
    if paths == 0 {
        return Err(Error::InvalidArgument("path count must be positive".into()));
    }
    if grid.n_steps() > u32::MAX as usize {
        return Err(Error::InvalidArgument("too many time steps".into()));
    }
    let requested = paths as u128 * grid.n_steps() as u128 * dim as u128;
    if requested > cap {
        return Err(Error::Resource { requested, cap });
    }
    Ok(requested as usize)
}

/// Writes the increments of path `m` into `out` (length `N * d`).
///
/// This is the unit of work parallel drivers split on; the result depends
/// only on `(seed, mode, m)` and the grid.
pub fn fill_path(grid: &TimeGrid, dim: usize, seed: u64, mode: PathMode, m: usize, out: &mut [f64]) -> Result<()> {
    let n = grid.n_steps();
    if out.len() != n * dim {
        return Err(Error::InvalidArgument(format!("path buffer has length {}, expected {}", out.len(), n * dim)));
    }
    let rng = CounterRng::new(seed);
    match mode {
        PathMode::Independent => {
            for i in 0..n {
                let sd = math::sqrt(grid.step(i));
                for c in 0..dim {
                    out[i * dim + c] = sd * rng.normal(DrawKey::new(m as u64, i as u32, c as u16, 0));
                }
            }
        }
        PathMode::Nested => {
            if !n.is_power_of_two() {
                return Err(Error::InvalidArgument(format!(
                    "nested refinement needs a power-of-two step count, got {n}"
                )));
            }
            let levels = n.trailing_zeros() as u16;
            let mut b = vec![0.0; (n + 1) * dim];
            let horizon = grid.horizon();
            for c in 0..dim {
                b[n * dim + c] = math::sqrt(horizon) * rng.normal(DrawKey::new(m as u64, 0, c as u16, 1));
            }
            // Level l inserts the midpoints of the 2^(l-1) coarse intervals.
            for level in 1..=levels {
                let stride = n >> level;
                let count = 1usize << (level - 1);
                for j in 0..count {
                    let mid = (2 * j + 1) * stride;
                    let (lo, hi) = (mid - stride, mid + stride);
                    let var = (grid.node(mid) - grid.node(lo)) * (grid.node(hi) - grid.node(mid))
                        / (grid.node(hi) - grid.node(lo));
                    let sd = math::sqrt(var);
                    let wl = (grid.node(hi) - grid.node(mid)) / (grid.node(hi) - grid.node(lo));
                    for c in 0..dim {
                        let mean = wl * b[lo * dim + c] + (1.0 - wl) * b[hi * dim + c];
                        // Keyed by the dyadic position (level, j), independent of N.
                        let key = DrawKey::new(m as u64, j as u32, c as u16, 1 + level);
                        b[mid * dim + c] = mean + sd * rng.normal(key);
                    }
                }
            }
            for i in 0..n {
                for c in 0..dim {
                    out[i * dim + c] = b[(i + 1) * dim + c] - b[i * dim + c];
                }
            }
        }
    }
    Ok(())
}

impl PathBundle {
    /// Wraps increments produced elsewhere (e.g. by a parallel driver).
    pub fn from_increments(
        grid: TimeGrid,
        dim: usize,
        paths: usize,
        seed: u64,
        mode: PathMode,
        increments: Vec<f64>,
    ) -> Result<Self> {
        let len = check_shape(&grid, dim, paths, u128::MAX)?;
        if increments.len() != len {
            return Err(Error::InvalidArgument(format!(
                "increment array has length {}, expected {len}",
                increments.len()
            )));
        }
        Ok(Self { grid, dim, paths, seed, mode, increments })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn paths(&self) -> usize {
        self.paths
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn mode(&self) -> PathMode {
        self.mode
    }
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Increment `B_{t_{i+1}} - B_{t_i}` on path `m`.
    pub fn increment(&self, m: usize, i: usize) -> &[f64] {
        let n = self.grid.n_steps();
        let off = (m * n + i) * self.dim;
        &self.increments[off..off + self.dim]
    }

    /// `B_{t_i}` on path `m`, summed left to right.
    pub fn brownian_at(&self, m: usize, i: usize) -> Result<Vec<f64>> {
        let n = self.grid.n_steps();
        if m >= self.paths {
            return Err(Error::IndexOutOfRange(format!("path {m} >= {}", self.paths)));
        }
        if i > n {
            return Err(Error::IndexOutOfRange(format!("node {i} > {n}")));
        }
        let mut b = vec![0.0; self.dim];
        for k in 0..i {
            for (acc, inc) in b.iter_mut().zip(self.increment(m, k)) {
                *acc += inc;
            }
        }
        Ok(b)
    }

    /// All node values, `(m, i, c)` row-major with `N + 1` nodes per path.
    /// Same summation order as [`brownian_at`](Self::brownian_at).
    pub fn positions(&self) -> Vec<f64> {
        let n = self.grid.n_steps();
        let d = self.dim;
        let mut out = vec![0.0; self.paths * (n + 1) * d];
        for m in 0..self.paths {
            let base = m * (n + 1) * d;
            for i in 0..n {
                for c in 0..d {
                    out[base + (i + 1) * d + c] = out[base + i * d + c] + self.increments[(m * n + i) * d + c];
                }
            }
        }
        out
    }

    /// `B_T` on every path.
    pub fn terminal_values(&self) -> Vec<f64> {
        let n = self.grid.n_steps();
        let d = self.dim;
        let pos = self.positions();
        let mut out = Vec::with_capacity(self.paths * d);
        for m in 0..self.paths {
            out.extend_from_slice(&pos[(m * (n + 1) + n) * d..(m * (n + 1) + n + 1) * d]);
        }
        out
    }
}

/// Simulates `paths` Brownian paths of dimension `dim` with the default
/// memory cap.
pub fn simulate_paths(grid: &TimeGrid, dim: usize, paths: usize, seed: u64) -> Result<PathBundle> {
    simulate_paths_with(grid, dim, paths, seed, PathMode::Independent, DEFAULT_MAX_ELEMENTS)
}

pub fn simulate_paths_with(
    grid: &TimeGrid,
    dim: usize,
    paths: usize,
    seed: u64,
    mode: PathMode,
    max_elements: u128,
) -> Result<PathBundle> {
    let len = check_shape(grid, dim, paths, max_elements)?;
    let n = grid.n_steps();
    let mut increments = vec![0.0; len];
    for (m, chunk) in increments.chunks_mut(n * dim).enumerate() {
        fill_path(grid, dim, seed, mode, m, chunk)?;
    }
    Ok(PathBundle { grid: grid.clone(), dim, paths, seed, mode, increments })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(make_grid(1.0, 1).unwrap().nodes(), &[0.0, 1.0]);
        assert_eq!(make_grid(1.0, 4).unwrap().nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = make_grid(0.5, 5).unwrap();
        for i in 0..5 {
            assert!((g.step(i) - 0.1).abs() < 1e-15);
        }
        assert_eq!(g.node(5), 0.5);
        assert!(make_grid(0.0, 3).is_err());
        assert!(make_grid(-1.0, 3).is_err());
        assert!(make_grid(1.0, 0).is_err());
    }

    #[test]
    fn deterministic_and_prefix_consistent() {
        let grid = make_grid(1.0, 8).unwrap();
        let a = simulate_paths(&grid, 2, 5, 11).unwrap();
        let b = simulate_paths(&grid, 2, 5, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.brownian_at(3, 0).unwrap(), vec![0.0, 0.0]);
        let pos = a.positions();
        for m in 0..5 {
            for i in 0..8 {
                let lo = a.brownian_at(m, i).unwrap();
                let hi = a.brownian_at(m, i + 1).unwrap();
                for c in 0..2 {
                    assert_eq!(hi[c] - lo[c], {
                        // B_{i+1} is computed as B_i + inc, so the difference is exact up to
                        // one rounding; compare against the same expression.
                        (lo[c] + a.increment(m, i)[c]) - lo[c]
                    });
                    assert_eq!(pos[(m * 9 + i + 1) * 2 + c].to_bits(), hi[c].to_bits());
                }
            }
        }
        assert!(a.brownian_at(5, 0).is_err());
        assert!(a.brownian_at(0, 9).is_err());
    }

    #[test]
    fn single_path_reproducible_in_isolation() {
        let grid = make_grid(2.0, 6).unwrap();
        let bundle = simulate_paths(&grid, 1, 10, 99).unwrap();
        let mut buf = vec![0.0; 6];
        fill_path(&grid, 1, 99, PathMode::Independent, 7, &mut buf).unwrap();
        assert_eq!(&bundle.increments()[7 * 6..8 * 6], buf.as_slice());
    }

    #[test]
    fn memory_cap() {
        let grid = make_grid(1.0, 100).unwrap();
        let err = simulate_paths_with(&grid, 1, 1000, 0, PathMode::Independent, 1000).unwrap_err();
        assert!(matches!(err, Error::Resource { requested: 100_000, cap: 1000 }));
    }

    #[test]
    fn nested_refinement_shares_nodes() {
        let coarse =
            simulate_paths_with(&make_grid(1.0, 4).unwrap(), 2, 20, 5, PathMode::Nested, DEFAULT_MAX_ELEMENTS).unwrap();
        let fine =
            simulate_paths_with(&make_grid(1.0, 8).unwrap(), 2, 20, 5, PathMode::Nested, DEFAULT_MAX_ELEMENTS).unwrap();
        for m in 0..20 {
            for i in 0..=4 {
                let a = coarse.brownian_at(m, i).unwrap();
                let b = fine.brownian_at(m, 2 * i).unwrap();
                for c in 0..2 {
                    assert!((a[c] - b[c]).abs() < 1e-12);
                }
            }
        }
        assert!(
            simulate_paths_with(&make_grid(1.0, 6).unwrap(), 1, 2, 0, PathMode::Nested, DEFAULT_MAX_ELEMENTS).is_err()
        );
    }
}
