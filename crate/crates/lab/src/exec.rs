//! Rayon-backed parallel drivers.
//!
//! Every driver writes result `k` into slot `k`, so outputs do not depend on
//! the worker count.

use bsdelab_core::convolution::{envelope_sequence, EnvelopeKind, EnvelopePoint, SequenceReport};
use bsdelab_core::generators::GeneratorSpec;
use bsdelab_core::solver::{Executor, PathStep};
use bsdelab_core::stochastic::{fill_path, PathBundle, PathMode, TimeGrid, DEFAULT_MAX_ELEMENTS};
use rayon::prelude::*;

use crate::error::{LabError, Result};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "BSDELAB_WORKERS";

/// A dedicated thread pool implementing the core [`Executor`].
pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    /// `workers = 0` lets rayon pick (one per available core).
    pub fn new(workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| LabError::Usage(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool })
    }

    /// Reads [`WORKERS_ENV`]; unset or empty means automatic.
    pub fn from_env() -> Result<Self> {
        let workers = match std::env::var(WORKERS_ENV) {
            Ok(v) if !v.trim().is_empty() => v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&w| w > 0)
                .ok_or_else(|| LabError::Usage(format!("{WORKERS_ENV} must be a positive integer, got '{v}'")))?,
            _ => 0,
        };
        Self::new(workers)
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl Executor for Parallel {
    fn run(&self, out: &mut [PathStep], f: &(dyn Fn(usize) -> PathStep + Sync)) {
        self.pool.install(|| out.par_iter_mut().enumerate().for_each(|(m, o)| *o = f(m)));
    }
}

/// Parallel counterpart of `simulate_paths_with`; bit-identical output.
pub fn simulate(
    exec: &Parallel,
    grid: &TimeGrid,
    dim: usize,
    paths: usize,
    seed: u64,
    mode: PathMode,
) -> Result<PathBundle> {
    let requested = paths as u128 * grid.n_steps() as u128 * dim as u128;
    if requested > DEFAULT_MAX_ELEMENTS {
        return Err(bsdelab_core::Error::Resource { requested, cap: DEFAULT_MAX_ELEMENTS }.into());
    }
    let width = grid.n_steps() * dim;
    let mut increments = vec![0.0; requested as usize];
    exec.install(|| {
        increments
            .par_chunks_mut(width.max(1))
            .enumerate()
            .try_for_each(|(m, chunk)| fill_path(grid, dim, seed, mode, m, chunk))
    })?;
    Ok(PathBundle::from_increments(grid.clone(), dim, paths, seed, mode, increments)?)
}

/// [`envelope_sequence`] evaluated point by point in parallel and merged in
/// point order.
pub fn envelope_sequence_par(
    exec: &Parallel,
    g: &GeneratorSpec,
    kind: EnvelopeKind,
    n_list: &[u32],
    points: &[EnvelopePoint],
    tol: f64,
) -> Result<SequenceReport> {
    let parts: Vec<SequenceReport> = exec.install(|| {
        points
            .par_iter()
            .map(|p| envelope_sequence(g, kind, n_list, core::slice::from_ref(p), tol))
            .collect::<bsdelab_core::Result<Vec<_>>>()
    })?;
    if parts.is_empty() {
        return Ok(envelope_sequence(g, kind, n_list, &[], tol)?);
    }
    let mut merged = SequenceReport {
        kind,
        tol,
        n_list: n_list.to_vec(),
        values: Vec::with_capacity(points.len()),
        certified_gaps: Vec::with_capacity(points.len()),
        g_values: Vec::with_capacity(points.len()),
        violations: Vec::new(),
        worst_order_excess: f64::NEG_INFINITY,
    };
    for (p, part) in parts.into_iter().enumerate() {
        merged.values.extend(part.values);
        merged.certified_gaps.extend(part.certified_gaps);
        merged.g_values.extend(part.g_values);
        merged.violations.extend(part.violations.into_iter().map(|mut v| {
            v.point = p;
            v
        }));
        merged.worst_order_excess = merged.worst_order_excess.max(part.worst_order_excess);
    }
    Ok(merged)
}
