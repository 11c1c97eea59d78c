//! Sampling-based checks of the structural assumptions on a generator.
//!
//! A check can refute an assumption (with a reproducible witness) or report
//! that no violation was found on the lattice. It never proves one.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{modulus_shape_violation, Assumption, GeneratorSpec, Modulus, Process};
use crate::math;
use crate::rng::{CounterRng, DrawKey};
use crate::stochastic::{make_grid, simulate_paths_with, PathMode, DEFAULT_MAX_ELEMENTS};

const TAG_B: u16 = 20;
const TAG_PAIR: u16 = 21;
/// Deepest halving used by the one-sided limit probes.
const HALVINGS: u32 = 40;
/// Continuity probes use the part of the lattice with `|y|, |z| <= 10`.
const PROBE_BOX: f64 = 10.0;

/// Sample points for the checks. Deterministic in `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub horizon: f64,
    pub dim: usize,
    pub seed: u64,
    pub t: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    /// Random pairs drawn in addition to the tensor lattice.
    pub pairs: usize,
    /// Largest |z| magnitude (also bounds the random pairs).
    pub z_max: f64,
}

fn signed_decades(lo_exp: i32, hi_exp: i32) -> Vec<f64> {
    let mut v = vec![0.0];
    for e in lo_exp..=hi_exp {
        let m = math::powf(10.0, e as f64);
        v.push(m);
        v.push(-m);
    }
    v
}

fn z_grid(dim: usize, z_max: f64) -> Vec<Vec<f64>> {
    let hi = math::floor(math::ln(z_max) / core::f64::consts::LN_10 + 1e-9) as i32;
    let mags: Vec<f64> = (-2..=hi).map(|e| math::powf(10.0, e as f64)).collect();
    let mut out = vec![vec![0.0; dim]];
    for &m in &mags {
        for c in 0..dim {
            for s in [1.0, -1.0] {
                let mut z = vec![0.0; dim];
                z[c] = s * m;
                out.push(z);
            }
        }
        if dim > 1 {
            let w = m / math::sqrt(dim as f64);
            out.push(vec![w; dim]);
            out.push(vec![-w; dim]);
        }
    }
    out
}

impl Lattice {
    /// 32 log-spaced times in `(1e-4 T, T]`, 16 Gaussian states `b ~ N(0, T)`,
    /// `y` and `z` magnitudes in `{0} U {10^-2, ..., 10^4}` with both signs,
    /// and `10^4` random pairs.
    pub fn standard(horizon: f64, dim: usize, seed: u64) -> Result<Self> {
        if !(horizon > 0.0) || dim == 0 {
            return Err(Error::InvalidArgument("lattice needs T > 0 and d >= 1".into()));
        }
        let t = (1..=32).map(|k| horizon * math::powf(10.0, -4.0 + 4.0 * k as f64 / 32.0)).collect();
        let rng = CounterRng::new(seed);
        let sd = math::sqrt(horizon);
        let b = (0..16u32)
            .map(|k| (0..dim).map(|c| sd * rng.normal(DrawKey::new(0, k, c as u16, TAG_B))).collect())
            .collect();
        Ok(Self { horizon, dim, seed, t, b, y: signed_decades(-2, 4), z: z_grid(dim, 1e4), pairs: 10_000, z_max: 1e4 })
    }

    /// Extends the `z` magnitudes up to `z_max` (a power of ten).
    pub fn with_z_max(mut self, z_max: f64) -> Self {
        self.z = z_grid(self.dim, z_max);
        self.z_max = z_max;
        self
    }

    pub fn with_pairs(mut self, pairs: usize) -> Self {
        self.pairs = pairs;
        self
    }

    fn y_max(&self) -> f64 {
        self.y.iter().fold(0.0, |a, &y| a.max(math::abs(y)))
    }

    /// Random pair `k`: `(t, b, y1, y2, z1, z2)` with log-uniform magnitudes.
    fn pair(&self, k: usize) -> (f64, &[f64], f64, f64, Vec<f64>, Vec<f64>) {
        let rng = CounterRng::new(self.seed);
        let u = |i: u32, c: u16| rng.uniform(DrawKey::new(1 + k as u64, i, c, TAG_PAIR));
        let ti = (u(0, 0) * self.t.len() as f64) as usize % self.t.len();
        let bi = (u(1, 0) * self.b.len() as f64) as usize % self.b.len();
        let logmag = |x: f64, top: f64| math::powf(10.0, -2.0 + x * (math::ln(top) / core::f64::consts::LN_10 + 2.0));
        let sign = |x: f64| if x < 0.5 { -1.0 } else { 1.0 };
        let ytop = self.y_max().max(1e-2);
        let y1 = sign(u(2, 0)) * logmag(u(3, 0), ytop);
        // Half the pairs are close together, half are far apart.
        let y2 = if k.is_multiple_of(2) {
            y1 + (u(4, 0) - 0.5) * 0.1 * (1.0 + math::abs(y1))
        } else {
            sign(u(5, 0)) * logmag(u(6, 0), ytop)
        };
        let mut z1 = vec![0.0; self.dim];
        let mut z2 = vec![0.0; self.dim];
        for c in 0..self.dim {
            let cc = c as u16;
            z1[c] = sign(u(7, cc)) * logmag(u(8, cc), self.z_max);
            z2[c] = if k.is_multiple_of(2) {
                z1[c] + (u(9, cc) - 0.5) * 0.1 * (1.0 + math::abs(z1[c]))
            } else {
                sign(u(10, cc)) * logmag(u(11, cc), self.z_max)
            };
        }
        (self.t[ti], &self.b[bi], y1, y2, z1, z2)
    }

    fn probe_ys(&self) -> Vec<f64> {
        self.y.iter().copied().filter(|y| math::abs(*y) <= PROBE_BOX).collect()
    }

    fn probe_zs(&self) -> Vec<Vec<f64>> {
        self.z.iter().filter(|z| math::norm(z) <= PROBE_BOX).cloned().collect()
    }

    fn probe_ts(&self) -> Vec<f64> {
        self.t.iter().step_by(4).copied().collect()
    }

    fn probe_bs(&self) -> &[Vec<f64>] {
        &self.b[..self.b.len().min(4)]
    }
}

/// Point (or pair of points) where an inequality was tightest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub b: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub assumption: String,
    pub passed: bool,
    pub checked: usize,
    pub violations: usize,
    pub skipped_non_finite: usize,
    /// `max(lhs - rhs)` over all checked inequalities.
    pub worst_slack: f64,
    pub witness: Option<Witness>,
    /// Best constants supported by the lattice, e.g. the smallest `mu`.
    pub empirical: BTreeMap<String, f64>,
    pub note: String,
}

/// Running tally of `lhs <= rhs` checks.
struct Tally {
    checked: usize,
    violations: usize,
    skipped: usize,
    worst: f64,
    witness: Option<Witness>,
}

impl Tally {
    fn new() -> Self {
        Self { checked: 0, violations: 0, skipped: 0, worst: f64::NEG_INFINITY, witness: None }
    }

    /// `scale` sizes the rounding allowance of the comparison.
    fn record(&mut self, lhs: f64, rhs: f64, scale: f64, witness: impl FnOnce() -> Witness) {
        if !lhs.is_finite() || !rhs.is_finite() || !scale.is_finite() {
            self.skipped += 1;
            return;
        }
        self.checked += 1;
        let slack = lhs - rhs;
        if slack > 1e-9 * (1.0 + math::abs(lhs) + math::abs(rhs) + scale) {
            self.violations += 1;
        }
        if slack > self.worst {
            self.worst = slack;
            let mut w = witness();
            w.lhs = lhs;
            w.rhs = rhs;
            self.witness = Some(w);
        }
    }

    fn finish(self, a: &str, empirical: BTreeMap<String, f64>, note: String) -> CheckReport {
        CheckReport {
            assumption: a.to_string(),
            passed: self.violations == 0,
            checked: self.checked,
            violations: self.violations,
            skipped_non_finite: self.skipped,
            worst_slack: self.worst,
            witness: self.witness,
            empirical,
            note,
        }
    }
}

fn wit(t: f64, b: &[f64], y: &[f64], z: &[&[f64]]) -> Witness {
    Witness { t, b: b.to_vec(), y: y.to_vec(), z: z.iter().map(|v| v.to_vec()).collect(), lhs: 0.0, rhs: 0.0 }
}

fn require(cond: Option<f64>, g: &GeneratorSpec, what: &str) -> Result<f64> {
    cond.ok_or_else(|| Error::Contract(format!("{} declares no {what}", g.label)))
}

fn max_ratio(acc: &mut f64, num: f64, den: f64) {
    if den > 0.0 && num.is_finite() && den.is_finite() {
        *acc = acc.max(num / den);
    }
}

/// `(g(y1,z) - g(y2,z))(y1 - y2) <= mu |y1 - y2|^2`.
pub fn check_h2(g: &GeneratorSpec, lat: &Lattice) -> Result<CheckReport> {
    let mu = require(g.params.mu, g, "mu")?;
    check_h2_with(g, lat, mu)
}

/// [`check_h2`] at an explicit `mu`.
pub fn check_h2_with(g: &GeneratorSpec, lat: &Lattice, mu: f64) -> Result<CheckReport> {
    let mut tally = Tally::new();
    let mut mu_hat: f64 = 0.0;
    let mut one = |t: f64, b: &[f64], y1: f64, y2: f64, z: &[f64]| {
        if y1 == y2 {
            return;
        }
        let (g1, g2) = (g.eval(t, b, y1, z), g.eval(t, b, y2, z));
        let dy = y1 - y2;
        max_ratio(&mut mu_hat, (g1 - g2) * dy, dy * dy);
        tally.record((g1 - g2) * dy, mu * dy * dy, (math::abs(g1) + math::abs(g2)) * math::abs(dy), || {
            wit(t, b, &[y1, y2], &[z])
        });
    };
    for &t in &lat.t {
        for b in &lat.b {
            for z in &lat.z {
                for (i, &y1) in lat.y.iter().enumerate() {
                    for &y2 in &lat.y[i + 1..] {
                        one(t, b, y1, y2, z);
                    }
                }
            }
        }
    }
    for k in 0..lat.pairs {
        let (t, b, y1, y2, z1, _) = lat.pair(k);
        one(t, b, y1, y2, &z1);
    }
    let mut emp = BTreeMap::new();
    emp.insert("mu".into(), mu_hat.max(0.0));
    Ok(tally.finish("H2", emp, format!("mu = {mu}")))
}

/// Growth and Hoelder conditions in `z`: (H4), (H4') and (H4'').
pub fn check_h4_family(g: &GeneratorSpec, lat: &Lattice, variant: Assumption) -> Result<CheckReport> {
    let p = &g.params;
    match variant {
        Assumption::H4 | Assumption::H4Prime => {
            let lambda = require(p.lambda, g, "lambda")?;
            let alpha = require(p.alpha, g, "alpha")?;
            check_growth_in_z(g, lat, variant, lambda, alpha, &p.f)
        }
        Assumption::H4DoublePrime => {
            let gamma = require(p.gamma, g, "gamma")?;
            let alpha = require(p.alpha, g, "alpha")?;
            check_holder_in_z(g, lat, gamma, alpha)
        }
        other => Err(Error::InvalidArgument(format!("{other} is not in the H4 family"))),
    }
}

/// `|g(y,z) - g(y,0)| <= lambda (f + |y| + |z|^alpha)` (H4) or
/// `<= lambda (f + |y| + |z|)^alpha` (H4').
pub fn check_growth_in_z(
    g: &GeneratorSpec,
    lat: &Lattice,
    variant: Assumption,
    lambda: f64,
    alpha: f64,
    f: &Process,
) -> Result<CheckReport> {
    let prime = match variant {
        Assumption::H4 => false,
        Assumption::H4Prime => true,
        other => return Err(Error::InvalidArgument(format!("{other} is not a growth condition"))),
    };
    let zero = vec![0.0; lat.dim];
    let mut tally = Tally::new();
    let mut lam_hat: f64 = 0.0;
    let mut one = |t: f64, b: &[f64], y: f64, z: &[f64]| {
        let ft = f.eval(t, b);
        let lhs = math::abs(g.eval(t, b, y, z) - g.eval(t, b, y, &zero));
        let base = if prime {
            math::powf(ft + math::abs(y) + math::norm(z), alpha)
        } else {
            ft + math::abs(y) + math::powf(math::norm(z), alpha)
        };
        max_ratio(&mut lam_hat, lhs, base);
        let scale = math::abs(g.eval(t, b, y, &zero));
        tally.record(lhs, lambda * base, scale, || wit(t, b, &[y], &[z]));
    };
    for &t in &lat.t {
        for b in &lat.b {
            for &y in &lat.y {
                for z in &lat.z {
                    one(t, b, y, z);
                }
            }
        }
    }
    for k in 0..lat.pairs {
        let (t, b, y, _, z, _) = lat.pair(k);
        one(t, b, y, &z);
    }
    let mut emp = BTreeMap::new();
    emp.insert("lambda".into(), lam_hat);
    Ok(tally.finish(variant.id(), emp, format!("lambda = {lambda}, alpha = {alpha}, f = {}", f.label())))
}

/// `|g(y,z1) - g(y,z2)| <= gamma |z1 - z2|^alpha`.
pub fn check_holder_in_z(g: &GeneratorSpec, lat: &Lattice, gamma: f64, alpha: f64) -> Result<CheckReport> {
    let mut tally = Tally::new();
    let mut gam_hat: f64 = 0.0;
    let mut one = |t: f64, b: &[f64], y: f64, z1: &[f64], z2: &[f64]| {
        let dz: Vec<f64> = z1.iter().zip(z2).map(|(a, c)| a - c).collect();
        let (g1, g2) = (g.eval(t, b, y, z1), g.eval(t, b, y, z2));
        let bound = math::powf(math::norm(&dz), alpha);
        max_ratio(&mut gam_hat, math::abs(g1 - g2), bound);
        tally.record(math::abs(g1 - g2), gamma * bound, math::abs(g1) + math::abs(g2), || wit(t, b, &[y], &[z1, z2]));
    };
    for &t in lat.t.iter().step_by(4) {
        for b in lat.b.iter().take(4) {
            for &y in &lat.y {
                for (i, z1) in lat.z.iter().enumerate() {
                    for z2 in &lat.z[i + 1..] {
                        one(t, b, y, z1, z2);
                    }
                }
            }
        }
    }
    for k in 0..lat.pairs {
        let (t, b, y, _, z1, z2) = lat.pair(k);
        one(t, b, y, &z1, &z2);
    }
    let mut emp = BTreeMap::new();
    emp.insert("gamma".into(), gam_hat);
    Ok(tally.finish("H4''", emp, format!("gamma = {gamma}, alpha = {alpha}")))
}

/// `(g(y1,z) - g(y2,z)) sgn(y1 - y2) <= rho(|y1 - y2|)` plus the shape of
/// `rho` and the divergence of `int_0+ 1/rho`.
pub fn check_h2prime(g: &GeneratorSpec, lat: &Lattice) -> Result<CheckReport> {
    let rho = g.params.rho.clone().ok_or_else(|| Error::Contract(format!("{} declares no rho", g.label)))?;
    check_h2prime_with(g, lat, &rho)
}

pub fn check_h2prime_with(g: &GeneratorSpec, lat: &Lattice, rho: &Modulus) -> Result<CheckReport> {
    let mut tally = Tally::new();
    let mut scale_hat: f64 = 0.0;
    let mut one = |t: f64, b: &[f64], y1: f64, y2: f64, z: &[f64]| {
        if y1 == y2 {
            return;
        }
        let (g1, g2) = (g.eval(t, b, y1, z), g.eval(t, b, y2, z));
        let lhs = (g1 - g2) * math::sgn(y1 - y2);
        let r = rho.eval(math::abs(y1 - y2));
        max_ratio(&mut scale_hat, lhs, r);
        tally.record(lhs, r, math::abs(g1) + math::abs(g2), || wit(t, b, &[y1, y2], &[z]));
    };
    for &t in &lat.t {
        for b in &lat.b {
            for z in &lat.z {
                for (i, &y1) in lat.y.iter().enumerate() {
                    for &y2 in &lat.y[i + 1..] {
                        one(t, b, y1, y2, z);
                    }
                }
            }
        }
    }
    for k in 0..lat.pairs {
        let (t, b, y1, y2, z1, _) = lat.pair(k);
        one(t, b, y1, y2, &z1);
    }
    let mut notes = Vec::new();
    if let Some(msg) = modulus_shape_violation(rho, true) {
        tally.violations += 1;
        notes.push(format!("rho shape: {msg}"));
    }
    if rho.eval(1e-3) <= 0.0 {
        tally.violations += 1;
        notes.push("rho(u) must be positive for u > 0".into());
    }
    let div = reciprocal_integral_diverges(|u| rho.eval(u));
    if !div.diverges {
        tally.violations += 1;
        notes.push(format!("int 1/rho converges near 0 (decay power {:.3})", div.power));
    }
    let mut emp = BTreeMap::new();
    emp.insert("rho_multiple".into(), scale_hat);
    emp.insert("reciprocal_decay_power".into(), div.power);
    let note = if notes.is_empty() { format!("rho = {}", rho.label()) } else { notes.join("; ") };
    Ok(tally.finish("H2'", emp, note))
}

/// `|g(y,z1) - g(y,z2)| <= phi(|z1 - z2|)` plus `phi(0) = 0`, monotonicity and
/// linear growth of `phi`.
pub fn check_h4star(g: &GeneratorSpec, lat: &Lattice) -> Result<CheckReport> {
    let phi = g.params.phi.clone().ok_or_else(|| Error::Contract(format!("{} declares no phi", g.label)))?;
    check_h4star_with(g, lat, &phi)
}

pub fn check_h4star_with(g: &GeneratorSpec, lat: &Lattice, phi: &Modulus) -> Result<CheckReport> {
    let mut tally = Tally::new();
    let mut scale_hat: f64 = 0.0;
    let mut one = |t: f64, b: &[f64], y: f64, z1: &[f64], z2: &[f64]| {
        let dz: Vec<f64> = z1.iter().zip(z2).map(|(a, c)| a - c).collect();
        let (g1, g2) = (g.eval(t, b, y, z1), g.eval(t, b, y, z2));
        let bound = phi.eval(math::norm(&dz));
        max_ratio(&mut scale_hat, math::abs(g1 - g2), bound);
        tally.record(math::abs(g1 - g2), bound, math::abs(g1) + math::abs(g2), || wit(t, b, &[y], &[z1, z2]));
    };
    for &t in lat.t.iter().step_by(4) {
        for b in lat.b.iter().take(4) {
            for &y in &lat.y {
                for (i, z1) in lat.z.iter().enumerate() {
                    for z2 in &lat.z[i + 1..] {
                        one(t, b, y, z1, z2);
                    }
                }
            }
        }
    }
    for k in 0..lat.pairs {
        let (t, b, y, _, z1, z2) = lat.pair(k);
        one(t, b, y, &z1, &z2);
    }
    let mut notes = Vec::new();
    if let Some(msg) = modulus_shape_violation(phi, false) {
        tally.violations += 1;
        notes.push(format!("phi shape: {msg}"));
    }
    // Linear growth: phi(u) / (1 + u) must not keep growing.
    let ratio = |u: f64| phi.eval(u) / (1.0 + u);
    if !(ratio(1e8) <= 2.0 * ratio(1e4) + 1e-12) {
        tally.violations += 1;
        notes.push("phi grows faster than linearly".into());
    }
    let mut emp = BTreeMap::new();
    emp.insert("phi_multiple".into(), scale_hat);
    let note = if notes.is_empty() { format!("phi = {}", phi.label()) } else { notes.join("; ") };
    Ok(tally.finish("H4*", emp, note))
}

/// Runs [`check_h2prime`] and [`check_h4star`].
pub fn check_h2prime_h4star(g: &GeneratorSpec, lat: &Lattice) -> Result<(CheckReport, CheckReport)> {
    Ok((check_h2prime(g, lat)?, check_h4star(g, lat)?))
}

/// `|g| <= f + C(|y| + |z|^alpha)`. Reports the smallest additive constant
/// that would have to be absorbed into `f` (`additive_excess`) and the
/// smallest `C` working with the declared `f`.
pub fn check_h5(g: &GeneratorSpec, lat: &Lattice) -> Result<CheckReport> {
    let c = require(g.params.c, g, "C")?;
    let alpha = require(g.params.alpha, g, "alpha")?;
    let f = &g.params.f;
    let mut tally = Tally::new();
    let mut c_hat: f64 = 0.0;
    let mut excess: f64 = 0.0;
    let mut one = |t: f64, b: &[f64], y: f64, z: &[f64]| {
        let v = math::abs(g.eval(t, b, y, z));
        let ft = f.eval(t, b);
        let grow = math::abs(y) + math::powf(math::norm(z), alpha);
        max_ratio(&mut c_hat, v - ft, grow);
        if v.is_finite() {
            excess = excess.max(v - ft - c * grow);
        }
        tally.record(v, ft + c * grow, 0.0, || wit(t, b, &[y], &[z]));
    };
    for &t in &lat.t {
        for b in &lat.b {
            for &y in &lat.y {
                for z in &lat.z {
                    one(t, b, y, z);
                }
            }
        }
    }
    for k in 0..lat.pairs {
        let (t, b, y, _, z, _) = lat.pair(k);
        one(t, b, y, &z);
    }
    let mut emp = BTreeMap::new();
    emp.insert("C".into(), c_hat.max(0.0));
    emp.insert("additive_excess".into(), excess.max(0.0));
    Ok(tally.finish("H5", emp, format!("C = {c}, alpha = {alpha}, f = {}", f.label())))
}

/// Gap sequence of a one-sided probe: `gaps[j-1]` is the discrepancy at
/// offset `2^-j`.
fn gap_vanishes(gaps: &[f64], scale: f64) -> bool {
    let last = gaps[gaps.len() - 1];
    let mid = gaps[gaps.len() / 2 - 1];
    last <= 1e-6 * (1.0 + scale) || last <= 0.5 * mid
}

/// Which one-sided continuity property to probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// Limit from the left equals the value.
    LeftLimit,
    /// Limit from the right equals the value.
    RightLimit,
}

/// Probes `lim g(y0 -+ h, z0 + h e) = g(y0, z0)` along `h = 2^-j` and records
/// the final gap. Joint perturbation of `z` uses each signed axis direction.
fn probe_limit(g: &GeneratorSpec, lat: &Lattice, side: Side, move_z: bool, tally: &mut Tally) {
    let sgn = if side == Side::LeftLimit { -1.0 } else { 1.0 };
    let dirs: Vec<Vec<f64>> = if move_z {
        (0..lat.dim)
            .flat_map(|c| {
                [1.0, -1.0].into_iter().map(move |s| {
                    let mut e = vec![0.0; lat.dim];
                    e[c] = s;
                    e
                })
            })
            .collect()
    } else {
        vec![vec![0.0; lat.dim]]
    };
    let mut gaps = vec![0.0; HALVINGS as usize];
    let mut zz = vec![0.0; lat.dim];
    for t in lat.probe_ts() {
        for b in lat.probe_bs() {
            for y0 in lat.probe_ys() {
                for z0 in lat.probe_zs() {
                    let g0 = g.eval(t, b, y0, &z0);
                    for e in &dirs {
                        for j in 1..=HALVINGS {
                            let h = math::powf(2.0, -(j as f64));
                            for c in 0..lat.dim {
                                zz[c] = z0[c] + h * e[c];
                            }
                            gaps[j as usize - 1] = math::abs(g.eval(t, b, y0 + sgn * h, &zz) - g0);
                        }
                        let last = gaps[gaps.len() - 1];
                        let lhs = if gap_vanishes(&gaps, math::abs(g0)) { 0.0 } else { last };
                        tally
                            .record(lhs, 0.0, 0.0, || wit(t, b, &[y0, y0 + sgn * math::powf(2.0, -40.0)], &[&z0, &zz]));
                    }
                }
            }
        }
    }
}

/// Probes the one-sided semicontinuity `liminf g >= g(y0,z0)` (`lower`) or
/// `limsup g <= g(y0,z0)` from the given side: the one-sided deficit along
/// the halving sequence must vanish.
fn probe_semicontinuity(g: &GeneratorSpec, lat: &Lattice, from_right: bool, lower: bool, tally: &mut Tally) {
    let sgn = if from_right { 1.0 } else { -1.0 };
    let mut gaps = vec![0.0; HALVINGS as usize];
    let mut zz = vec![0.0; lat.dim];
    for t in lat.probe_ts() {
        for b in lat.probe_bs() {
            for y0 in lat.probe_ys() {
                for z0 in lat.probe_zs() {
                    let g0 = g.eval(t, b, y0, &z0);
                    for j in 1..=HALVINGS {
                        let h = math::powf(2.0, -(j as f64));
                        let mut deficit: f64 = 0.0;
                        for s in [1.0, -1.0] {
                            for c in 0..lat.dim {
                                zz[c] = z0[c] + s * h;
                            }
                            let v = g.eval(t, b, y0 + sgn * h, &zz);
                            deficit = deficit.max(if lower { g0 - v } else { v - g0 });
                        }
                        gaps[j as usize - 1] = deficit;
                    }
                    let lhs = if gap_vanishes(&gaps, math::abs(g0)) { 0.0 } else { gaps[gaps.len() - 1] };
                    tally.record(lhs, 0.0, 0.0, || wit(t, b, &[y0], &[&z0]));
                }
            }
        }
    }
}

/// Continuity in `z` along halving sequences in every axis direction.
fn probe_z_continuity(g: &GeneratorSpec, lat: &Lattice, tally: &mut Tally) {
    let mut gaps = vec![0.0; HALVINGS as usize];
    let mut zz = vec![0.0; lat.dim];
    for t in lat.probe_ts() {
        for b in lat.probe_bs() {
            for y0 in lat.probe_ys() {
                for z0 in lat.probe_zs() {
                    let g0 = g.eval(t, b, y0, &z0);
                    for c in 0..lat.dim {
                        for s in [1.0, -1.0] {
                            for j in 1..=HALVINGS {
                                zz.copy_from_slice(&z0);
                                zz[c] += s * math::powf(2.0, -(j as f64));
                                gaps[j as usize - 1] = math::abs(g.eval(t, b, y0, &zz) - g0);
                            }
                            let lhs = if gap_vanishes(&gaps, math::abs(g0)) { 0.0 } else { gaps[gaps.len() - 1] };
                            tally.record(lhs, 0.0, 0.0, || wit(t, b, &[y0], &[&z0, &zz]));
                        }
                    }
                }
            }
        }
    }
}

/// Continuity in `y` uniformly over the `z` sample: the sup over `z` of
/// `|g(y0 +- h, z) - g(y0, z)|` must vanish along the halving sequence.
fn probe_y_uniform_continuity(g: &GeneratorSpec, lat: &Lattice, tally: &mut Tally) {
    let zs = lat.probe_zs();
    let mut gaps = vec![0.0; HALVINGS as usize];
    for t in lat.probe_ts() {
        for b in lat.probe_bs() {
            for y0 in lat.probe_ys() {
                let base: Vec<f64> = zs.iter().map(|z| g.eval(t, b, y0, z)).collect();
                let scale = base.iter().fold(0.0f64, |a, v| a.max(math::abs(*v)));
                for s in [1.0, -1.0] {
                    for j in 1..=HALVINGS {
                        let h = s * math::powf(2.0, -(j as f64));
                        gaps[j as usize - 1] = zs
                            .iter()
                            .zip(&base)
                            .map(|(z, g0)| math::abs(g.eval(t, b, y0 + h, z) - g0))
                            .fold(0.0, f64::max);
                    }
                    let lhs = if gap_vanishes(&gaps, scale) { 0.0 } else { gaps[gaps.len() - 1] };
                    tally.record(lhs, 0.0, 0.0, || wit(t, b, &[y0], &[]));
                }
            }
        }
    }
}

/// (H1): continuous in `z`, and continuous in `y` uniformly over the `z`
/// sample. Only the part of the lattice with `|y|, |z| <= 10` is probed.
pub fn check_h1(g: &GeneratorSpec, lat: &Lattice) -> Result<CheckReport> {
    let mut tally = Tally::new();
    probe_y_uniform_continuity(g, lat, &mut tally);
    probe_z_continuity(g, lat, &mut tally);
    Ok(tally.finish("H1", BTreeMap::new(), "uniformity in z checked over the z sample only".into()))
}

/// (H1'): joint continuity in `(y, z)` along diagonal approaches.
pub fn check_h1_prime(g: &GeneratorSpec, lat: &Lattice) -> Result<CheckReport> {
    let mut tally = Tally::new();
    probe_limit(g, lat, Side::LeftLimit, true, &mut tally);
    probe_limit(g, lat, Side::RightLimit, true, &mut tally);
    Ok(tally.finish("H1'", BTreeMap::new(), String::new()))
}

/// (H1a): limit from the left in `y` (jointly with `z`) equals the value,
/// liminf from the right is at least the value, continuous in `z`.
pub fn check_h1a(g: &GeneratorSpec, lat: &Lattice) -> Result<CheckReport> {
    let mut tally = Tally::new();
    probe_limit(g, lat, Side::LeftLimit, true, &mut tally);
    probe_semicontinuity(g, lat, true, true, &mut tally);
    probe_z_continuity(g, lat, &mut tally);
    Ok(tally.finish("H1a", BTreeMap::new(), String::new()))
}

/// (H1b): mirror of (H1a).
pub fn check_h1b(g: &GeneratorSpec, lat: &Lattice) -> Result<CheckReport> {
    let mut tally = Tally::new();
    probe_limit(g, lat, Side::RightLimit, true, &mut tally);
    probe_semicontinuity(g, lat, false, false, &mut tally);
    probe_z_continuity(g, lat, &mut tally);
    Ok(tally.finish("H1b", BTreeMap::new(), String::new()))
}

/// Runs [`check_h5`] and [`check_h1a`].
pub fn check_h5_and_h1a(g: &GeneratorSpec, lat: &Lattice) -> Result<(CheckReport, CheckReport)> {
    Ok((check_h5(g, lat)?, check_h1a(g, lat)?))
}

/// (H3): for `r` in `{1, 10}`, the path average of a midpoint quadrature of
/// `phi_r(t) = sup_{|y|<=r} |g(t, B_t, y, 0)|` over 41 `y` values must be
/// finite and stable under 64-fold grid refinement (nested paths, so the
/// coarse nodes are shared). A non-integrable singularity in `t` makes the
/// fine quadrature grow without bound.
pub fn check_h3(g: &GeneratorSpec, lat: &Lattice) -> Result<CheckReport> {
    const PATHS: usize = 32;
    const COARSE: usize = 64;
    const FINE: usize = 4096;
    let mut tally = Tally::new();
    let mut emp = BTreeMap::new();
    let zero = vec![0.0; lat.dim];
    for r in [1.0, 10.0] {
        let ys: Vec<f64> = (0..=40).map(|k| -r + 2.0 * r * k as f64 / 40.0).collect();
        let mut quad = [0.0; 2];
        for (slot, n) in [COARSE, FINE].into_iter().enumerate() {
            let grid = make_grid(lat.horizon, n)?;
            let paths = simulate_paths_with(&grid, lat.dim, PATHS, lat.seed, PathMode::Nested, DEFAULT_MAX_ELEMENTS)?;
            let mut total = 0.0;
            let mut b = vec![0.0; lat.dim];
            for m in 0..PATHS {
                b.iter_mut().for_each(|x| *x = 0.0);
                for i in 0..n {
                    let inc = paths.increment(m, i);
                    // Midpoint state: B_{t_i} + inc / 2.
                    let bm: Vec<f64> = b.iter().zip(inc).map(|(x, d)| x + 0.5 * d).collect();
                    let tm = grid.midpoint(i);
                    let phi = ys.iter().map(|&y| math::abs(g.eval(tm, &bm, y, &zero))).fold(0.0, f64::max);
                    total += grid.step(i) * phi;
                    b.iter_mut().zip(inc).for_each(|(x, d)| *x += d);
                }
            }
            quad[slot] = total / PATHS as f64;
        }
        emp.insert(format!("phi_{r}_integral"), quad[1]);
        let growth = quad[1] - quad[0];
        tally.record(growth, 0.5 * math::abs(quad[0]) + 1e-9, 0.0, || Witness {
            t: 0.0,
            b: Vec::new(),
            y: vec![r],
            z: Vec::new(),
            lhs: 0.0,
            rhs: 0.0,
        });
    }
    Ok(tally.finish("H3", emp, "quadrature of sup_{|y|<=r} |g(t,B_t,y,0)| along sampled paths".into()))
}

/// One-sided growth inequality of [`sign_growth_bound`] on the lattice.
pub fn check_sign_growth(g: &GeneratorSpec, lat: &Lattice) -> Result<CheckReport> {
    let mut tally = Tally::new();
    for &t in &lat.t {
        for b in &lat.b {
            for &y in &lat.y {
                for z in &lat.z {
                    let (lhs, rhs) = crate::generators::sign_growth_bound(g, t, b, y, z)?;
                    tally.record(lhs, rhs, 0.0, || wit(t, b, &[y], &[z]));
                }
            }
        }
    }
    Ok(tally.finish(
        "sign_growth",
        BTreeMap::new(),
        "g sgn(y) <= |g(y=0,z=0)| + lambda f + (lambda+mu)|y| + lambda|z|".into(),
    ))
}

/// Checks one assumption at the generator's declared parameters.
pub fn check_assumption(g: &GeneratorSpec, lat: &Lattice, a: Assumption) -> Result<CheckReport> {
    if g.dim != lat.dim {
        return Err(Error::InvalidArgument(format!("generator d={} but lattice d={}", g.dim, lat.dim)));
    }
    match a {
        Assumption::H1 => check_h1(g, lat),
        Assumption::H1Prime => check_h1_prime(g, lat),
        Assumption::H1a => check_h1a(g, lat),
        Assumption::H1b => check_h1b(g, lat),
        Assumption::H2 => check_h2(g, lat),
        Assumption::H2Prime => check_h2prime(g, lat),
        Assumption::H3 => check_h3(g, lat),
        Assumption::H4 | Assumption::H4Prime | Assumption::H4DoublePrime => check_h4_family(g, lat, a),
        Assumption::H4Star => check_h4star(g, lat),
        Assumption::H5 => check_h5(g, lat),
    }
}

/// Checks every assumption the generator claims.
pub fn check_claimed(g: &GeneratorSpec, lat: &Lattice) -> Result<Vec<CheckReport>> {
    g.params.flags.iter().map(|a| check_assumption(g, lat, a)).collect()
}

/// Derived constants along `(H4'') => (H4') => (H4)`: when (H4'') passes at
/// `(gamma, alpha)`, (H4') is tested at `lambda = gamma, f = 0` and (H4) at
/// `lambda = gamma, f = 1`. When (H4') is claimed, (H4) is tested at the same
/// `lambda` and `f' = f^alpha + 1`. When (H2) and an (H4) variant pass, the
/// one-sided growth inequality is tested.
pub fn check_implications(g: &GeneratorSpec, lat: &Lattice) -> Result<Vec<CheckReport>> {
    let p = &g.params;
    let mut out = Vec::new();
    let mut growth_ok = false;
    if let (Some(gamma), Some(alpha)) = (p.gamma, p.alpha) {
        if p.claims(Assumption::H4DoublePrime) {
            let base = check_holder_in_z(g, lat, gamma, alpha)?;
            if base.passed {
                let zero = Process::constant(0.0);
                let one = Process::constant(1.0);
                let hp = check_growth_in_z(g, lat, Assumption::H4Prime, gamma, alpha, &zero)?;
                let h = check_growth_in_z(g, lat, Assumption::H4, gamma, alpha, &one)?;
                growth_ok |= h.passed;
                out.push(relabel(hp, "H4'' => H4'"));
                out.push(relabel(h, "H4'' => H4"));
            }
        }
    }
    if let (Some(lambda), Some(alpha)) = (p.lambda, p.alpha) {
        if p.claims(Assumption::H4Prime) {
            let base = check_growth_in_z(g, lat, Assumption::H4Prime, lambda, alpha, &p.f)?;
            if base.passed {
                let gc = p.growth_constants().expect("lambda and alpha are declared");
                let h = check_growth_in_z(g, lat, Assumption::H4, gc.lambda, alpha, &gc.f)?;
                growth_ok |= h.passed;
                out.push(relabel(h, "H4' => H4"));
            }
        }
        if p.claims(Assumption::H4) {
            growth_ok |= check_growth_in_z(g, lat, Assumption::H4, lambda, alpha, &p.f)?.passed;
        }
    }
    if p.claims(Assumption::H2) && growth_ok && check_h2(g, lat)?.passed {
        out.push(check_sign_growth(g, lat)?);
    }
    Ok(out)
}

fn relabel(mut r: CheckReport, label: &str) -> CheckReport {
    r.assumption = label.to_string();
    r
}

/// Verdict of [`reciprocal_integral_diverges`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub diverges: bool,
    /// Estimated `p` in `D_k ~ k^-p` for the decade integrals
    /// `D_k = int_{10^-(k+1)}^{10^-k} du / rho(u)`.
    pub power: f64,
    /// `sum_{k < 20} D_k`.
    pub partial_integral: f64,
}

/// Classifies `int_0+ du / rho(u)` from the decay of its decade integrals.
/// `sum_k D_k` diverges when `D_k` decays no faster than `1/k`; the
/// classifier estimates `p = log2(D_10 / D_20)` and reports divergence when
/// `p < 1.1`. Geometric decay gives large `p`.
pub fn reciprocal_integral_diverges(rho: impl Fn(f64) -> f64) -> DivergenceReport {
    const DECADES: usize = 20;
    const PANELS: usize = 64;
    let decade = |k: usize| -> f64 {
        // Simpson in s = ln u over [ln 10^-(k+1), ln 10^-k].
        let (a, b) = (-((k + 1) as f64) * core::f64::consts::LN_10, -(k as f64) * core::f64::consts::LN_10);
        let h = (b - a) / PANELS as f64;
        let f = |s: f64| {
            let u = math::exp(s);
            let r = rho(u);
            if r > 0.0 {
                u / r
            } else {
                f64::INFINITY
            }
        };
        let mut acc = f(a) + f(b);
        for i in 1..PANELS {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        acc * h / 3.0
    };
    let d: Vec<f64> = (0..DECADES).map(decade).collect();
    let partial: f64 = d.iter().sum();
    let (d10, d20) = (d[9], d[DECADES - 1]);
    let power = if !(d20 > 0.0) || !d20.is_finite() || !d10.is_finite() {
        if d20.is_infinite() {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        math::ln(d10 / d20) / core::f64::consts::LN_2
    };
    DivergenceReport { diverges: power < 1.1, power, partial_integral: partial }
}
