//! Backward-Euler least-squares Monte Carlo solver for
//! `y_t = xi + int_t^T g(s, B_s, y_s, z_s) ds - int_t^T z_s . dB_s`.
//!
//! The step is implicit in `y` and explicit in `z`:
//! `Y_i = E[Y_{i+1} | B_{t_i}] + dt g(t_i^mid, B_{t_i}, Y_i, Z_i)` with
//! `Z_i = E[Y_{i+1} dB_i | B_{t_i}] / dt`. `g` is evaluated at the interval
//! midpoint so integrable singularities in `t` never hit a node.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{Assumption, GeneratorSpec, TerminalCondition};
use crate::math;
use crate::optimize::solve_increasing;
use crate::regression::{fit, BasisSpec, Design};
use crate::stochastic::PathBundle;

/// How `xi` is truncated at level `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationMode {
    /// `min(xi, L)`, nondecreasing in `L`.
    Cap,
    /// `xi` clamped to `[-L, L]`.
    Clamp,
    /// `xi 1_{|B_T| <= L}`.
    Cutoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub mode: TruncationMode,
    pub level: f64,
}

impl Truncation {
    pub fn apply(&self, xi: f64, b_terminal: &[f64]) -> f64 {
        let l = self.level;
        match self.mode {
            TruncationMode::Cap => xi.min(l),
            TruncationMode::Clamp => xi.clamp(-l, l),
            TruncationMode::Cutoff => {
                if math::norm(b_terminal) <= l {
                    xi
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub basis: BasisSpec,
    pub picard_iters: usize,
    pub picard_tol: f64,
    /// `None` or an infinite level leaves `xi` untouched.
    pub truncation: Option<Truncation>,
    /// Exponents for the `S^beta` / `M^beta` diagnostics, each in `(0, 1)`.
    pub betas: Vec<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            basis: BasisSpec::default(),
            picard_iters: 20,
            picard_tol: 1e-10,
            truncation: None,
            betas: vec![0.25, 0.5, 0.75],
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        if self.picard_iters == 0 {
            return Err(Error::InvalidArgument("picard_iters must be positive".into()));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidArgument("picard_tol must be positive".into()));
        }
        if let Some(tr) = self.truncation {
            if !(tr.level >= 0.0) {
                return Err(Error::InvalidArgument("truncation level must be >= 0".into()));
            }
        }
        if self.betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::InvalidArgument("diagnostic exponents must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// RMS residual of the `Y_{i+1}` regression.
    pub residual_rms: f64,
    pub condition: f64,
    pub picard_max: u32,
    pub picard_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `beta -> E[sup_i |Y_i|^beta]` (the `S^beta` functional for `beta < 1`).
    pub s_beta: BTreeMap<String, Estimate>,
    /// `beta -> E[(sum_i |Z_i|^2 dt)^(beta/2)]`.
    pub m_beta: BTreeMap<String, Estimate>,
    /// Indexed by step `i = 0..N`.
    pub steps: Vec<StepStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    paths: usize,
    n_steps: usize,
    dim: usize,
    dt: Vec<f64>,
    /// `M x (N+1)` row-major.
    y: Vec<f64>,
    /// `M x N x d` row-major.
    z: Vec<f64>,
    /// `xi + sum_i (Y_i - E_i)` per path; its mean is `y0`.
    pathwise: Vec<f64>,
    pub y0: f64,
    pub y0_stderr: f64,
    /// `max_i sigma_i sqrt(K_i / M)`: per-step regression error scale.
    pub eps_reg: f64,
    pub diagnostics: Diagnostics,
}

impl SolveResult {
    pub fn paths(&self) -> usize {
        self.paths
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    /// `Y` on path `m` at nodes `0..=N`.
    pub fn y_path(&self, m: usize) -> &[f64] {
        &self.y[m * (self.n_steps + 1)..(m + 1) * (self.n_steps + 1)]
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    /// `Z` on path `m` at step `i`.
    pub fn z_at(&self, m: usize, i: usize) -> &[f64] {
        let off = (m * self.n_steps + i) * self.dim;
        &self.z[off..off + self.dim]
    }
    pub fn z(&self) -> &[f64] {
        &self.z
    }
    /// Per-path samples whose mean is `y0`.
    pub fn pathwise(&self) -> &[f64] {
        &self.pathwise
    }
    /// Mean of `Y` across paths at node `i`.
    pub fn mean_at(&self, i: usize) -> f64 {
        (0..self.paths).map(|m| self.y_path(m)[i]).sum::<f64>() / self.paths as f64
    }
}

/// Standard error of `y0(b) - y0(a)` from solves on the same paths.
pub fn paired_stderr(a: &SolveResult, b: &SolveResult) -> Result<f64> {
    if a.paths != b.paths {
        return Err(Error::InvalidArgument("paired results need the same paths".into()));
    }
    let diff: Vec<f64> = a.pathwise.iter().zip(&b.pathwise).map(|(x, y)| y - x).collect();
    Ok(mean_stderr(&diff).stderr)
}

fn mean_stderr(v: &[f64]) -> Estimate {
    let (value, stderr) = math::mean_stderr(v);
    Estimate { value, stderr }
}

/// Result of the implicit step on one path.
#[derive(Debug, Clone, Copy, Default)]
pub struct PathStep {
    pub y: f64,
    pub iterations: u32,
    pub converged: bool,
}

/// Runs per-path work. Implementations must write `out[m] = f(m)`; the
/// solver's output then does not depend on scheduling.
pub trait Executor: Sync {
    fn run(&self, out: &mut [PathStep], f: &(dyn Fn(usize) -> PathStep + Sync));
}

/// Evaluates paths one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn run(&self, out: &mut [PathStep], f: &(dyn Fn(usize) -> PathStep + Sync)) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = f(m);
        }
    }
}

pub fn solve(xi: &TerminalCondition, g: &GeneratorSpec, paths: &PathBundle, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_with(xi, g, paths, cfg, &Sequential)
}

/// [`solve`] with per-path work delegated to `exec`.
pub fn solve_with(
    xi: &TerminalCondition,
    g: &GeneratorSpec,
    paths: &PathBundle,
    cfg: &SolverConfig,
    exec: &dyn Executor,
) -> Result<SolveResult> {
    cfg.validate()?;
    // Heavy tails enter only through a truncation family.
    if !xi.square_integrable && !cfg.truncation.is_some_and(|t| t.level.is_finite()) {
        return Err(Error::Config(format!(
            "terminal '{}' is not square integrable; solve it through a finite truncation",
            xi.label
        )));
    }
    let d = paths.dim();
    if g.dim != d {
        return Err(Error::InvalidArgument(format!("generator d={} but paths d={d}", g.dim)));
    }
    let grid = paths.grid();
    let n = grid.n_steps();
    let mpaths = paths.paths();
    let dts: Vec<f64> = (0..n).map(|i| grid.step(i)).collect();
    if g.params.claims(Assumption::H2) {
        let mu = g.params.mu.unwrap_or(0.0);
        let dt_max = dts.iter().fold(0.0f64, |a, &v| a.max(v));
        if !(dt_max * mu < 1.0) {
            return Err(Error::Contract(format!("implicit step needs dt*mu < 1, got {}", dt_max * mu)));
        }
    }
    let pos = paths.positions();
    let node = |m: usize, i: usize| &pos[(m * (n + 1) + i) * d..(m * (n + 1) + i + 1) * d];

    let w = n + 1;
    let mut y = vec![0.0; mpaths * w];
    let mut z = vec![0.0; mpaths * n * d];
    let mut pathwise = vec![0.0; mpaths];
    let trunc = cfg.truncation.filter(|t| t.level.is_finite());
    for m in 0..mpaths {
        let bt = node(m, n);
        let mut v = xi.eval(bt);
        if let Some(t) = trunc {
            v = t.apply(v, bt);
        }
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("terminal value {v} on path {m}")));
        }
        y[m * w + n] = v;
        pathwise[m] = v;
    }

    let mut targets = vec![0.0; mpaths];
    let mut ztargets = vec![0.0; mpaths * d];
    let mut states = vec![0.0; mpaths * d];
    let mut expect = vec![0.0; mpaths];
    let mut out = vec![PathStep::default(); mpaths];
    let mut steps = vec![StepStats { residual_rms: 0.0, condition: 1.0, picard_max: 0, picard_mean: 0.0 }; n];
    let mut eps_reg: f64 = 0.0;
    let mut pred = vec![0.0; d];
    for i in (0..n).rev() {
        let dt = dts[i];
        for m in 0..mpaths {
            targets[m] = y[m * w + i + 1];
            states[m * d..(m + 1) * d].copy_from_slice(node(m, i));
        }
        let design = Design::build(&cfg.basis, &states, d, grid.node(i))?;
        let f = fit(&design, &targets, 1, i)?;
        // E_i dB_i has conditional mean zero, so centring Y_{i+1} before
        // regressing Y_{i+1} dB_i keeps the estimator's target and cuts its
        // variance.
        for m in 0..mpaths {
            f.predict_into(&design, m, &mut pred[..1]);
            expect[m] = pred[0];
            let centred = targets[m] - pred[0];
            for (c, db) in paths.increment(m, i).iter().enumerate() {
                ztargets[m * d + c] = centred * db;
            }
        }
        let fz = fit(&design, &ztargets, d, i)?;
        for m in 0..mpaths {
            fz.predict_into(&design, m, &mut pred);
            for c in 0..d {
                z[(m * n + i) * d + c] = pred[c] / dt;
            }
        }
        let tm = grid.midpoint(i);
        let slack = dt * g.eval_tol;
        {
            let (z, expect) = (&z, &expect);
            let step = |m: usize| {
                let b = node(m, i);
                let zm = &z[(m * n + i) * d..(m * n + i + 1) * d];
                let root =
                    solve_increasing(|v| dt * g.eval(tm, b, v, zm), expect[m], cfg.picard_tol, slack, cfg.picard_iters);
                PathStep { y: root.x, iterations: root.iterations as u32, converged: root.converged }
            };
            exec.run(&mut out, &step);
        }
        let mut it_sum = 0u64;
        let mut it_max = 0u32;
        for (m, o) in out.iter().enumerate() {
            if !o.y.is_finite() {
                let b = node(m, i);
                let zm = z[(m * n + i) * d..(m * n + i + 1) * d].to_vec();
                let value = g.eval(tm, b, expect[m], &zm);
                return Err(Error::Evaluation { t: tm, y: expect[m], z: zm, value });
            }
            if !o.converged {
                return Err(Error::StepFailure { step: i, path: m });
            }
            y[m * w + i] = o.y;
            pathwise[m] += o.y - expect[m];
            it_sum += o.iterations as u64;
            it_max = it_max.max(o.iterations);
        }
        let k = design.size();
        eps_reg = eps_reg.max(f.residual_rms[0] * math::sqrt(k as f64 / mpaths as f64));
        steps[i] = StepStats {
            residual_rms: f.residual_rms[0],
            condition: f.condition,
            picard_max: it_max,
            picard_mean: it_sum as f64 / mpaths as f64,
        };
    }
    let est = mean_stderr(&pathwise);
    let mut res = SolveResult {
        paths: mpaths,
        n_steps: n,
        dim: d,
        dt: dts,
        y,
        z,
        pathwise,
        y0: 0.0,
        y0_stderr: est.stderr,
        eps_reg,
        diagnostics: Diagnostics { s_beta: BTreeMap::new(), m_beta: BTreeMap::new(), steps },
    };
    // Node 0 is deterministic; every path carries the same value.
    res.y0 = res.y[0];
    let diag = diagnostics_report(&res, &cfg.betas);
    res.diagnostics.s_beta = diag.s_beta;
    res.diagnostics.m_beta = diag.m_beta;
    Ok(res)
}

/// Monte Carlo `S^beta` and `M^beta` estimates over the grid nodes.
pub fn diagnostics_report(res: &SolveResult, betas: &[f64]) -> Diagnostics {
    let mut s_beta = BTreeMap::new();
    let mut m_beta = BTreeMap::new();
    let sup: Vec<f64> =
        (0..res.paths).map(|m| res.y_path(m).iter().fold(0.0f64, |a, v| a.max(math::abs(*v)))).collect();
    let quad: Vec<f64> = (0..res.paths)
        .map(|m| (0..res.n_steps).map(|i| res.dt[i] * res.z_at(m, i).iter().map(|v| v * v).sum::<f64>()).sum())
        .collect();
    for &beta in betas {
        let key = format!("{beta}");
        let s: Vec<f64> = sup.iter().map(|v| math::powf(*v, beta)).collect();
        let q: Vec<f64> = quad.iter().map(|v| math::powf(*v, 0.5 * beta)).collect();
        s_beta.insert(key.clone(), mean_stderr(&s));
        m_beta.insert(key, mean_stderr(&q));
    }
    Diagnostics { s_beta, m_beta, steps: res.diagnostics.steps.clone() }
}

/// One solve per truncation level on the same paths. `levels` must be
/// increasing; an infinite level is the untruncated solve.
pub fn solve_truncated_family(
    xi: &TerminalCondition,
    g: &GeneratorSpec,
    paths: &PathBundle,
    cfg: &SolverConfig,
    mode: TruncationMode,
    levels: &[f64],
    exec: &dyn Executor,
) -> Result<Vec<SolveResult>> {
    if levels.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("truncation levels must be increasing".into()));
    }
    levels
        .iter()
        .map(|&level| {
            let mut c = cfg.clone();
            c.truncation = Some(Truncation { mode, level });
            solve_with(xi, g, paths, &c, exec)
        })
        .collect()
}
