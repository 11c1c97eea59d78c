//! Hoelder inf/sup-convolutions of a generator.
//!
//! * `InfZ`:  `g_n(y,z) = inf_u  g(y,u) + (n+lambda)|u-z|^alpha`
//! * `SupZ`:  `g^n(y,z) = sup_u  g(y,u) - (n+lambda)|u-z|^alpha`
//! * `InfYz`: `g_n(y,z) = inf_{u,v} g(u,v) + nC(|y-u| + |z-v|^alpha)`
//! * `SupYz`: `g^n(y,z) = sup_{u,v} g(u,v) - nC(|y-u| + |z-v|^alpha)`
//!
//! Each envelope is evaluated by minimizing over a ball whose radius follows
//! from the growth assumption: outside it the penalized objective exceeds its
//! value at `(y, z)`. Inside the ball the search runs in the coordinate
//! `s = |u - z|^alpha`, in which the penalty is linear, so a bracket of width
//! `w` in `s` changes the penalty by at most `c w`. Coarse grid first, then
//! Brent (1-d) or compass search (2-d and 3-d) from the best grid points
//! until that penalty variation drops below `tol / 2`.
//!
//! The reported `certified_gap` is the penalty variation over the final
//! bracket around the returned point. It does not exclude a better minimum
//! missed by the coarse grid when `g` oscillates below the grid pitch.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{Assumption, AssumptionParams, Flags, GeneratorSpec, Process};
use crate::math;
use crate::optimize::{brent_min, compass_min, local_minima};

pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    InfZ,
    SupZ,
    InfYz,
    SupYz,
}

impl EnvelopeKind {
    pub const ALL: [EnvelopeKind; 4] =
        [EnvelopeKind::InfZ, EnvelopeKind::SupZ, EnvelopeKind::InfYz, EnvelopeKind::SupYz];

    pub fn id(self) -> &'static str {
        match self {
            EnvelopeKind::InfZ => "inf_z",
            EnvelopeKind::SupZ => "sup_z",
            EnvelopeKind::InfYz => "inf_yz",
            EnvelopeKind::SupYz => "sup_yz",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        EnvelopeKind::ALL
            .into_iter()
            .find(|k| k.id() == norm)
            .ok_or_else(|| Error::UnknownLabel(format!("envelope kind '{s}'")))
    }

    pub fn is_inf(self) -> bool {
        matches!(self, EnvelopeKind::InfZ | EnvelopeKind::InfYz)
    }

    pub fn is_joint(self) -> bool {
        matches!(self, EnvelopeKind::InfYz | EnvelopeKind::SupYz)
    }

    /// The opposite kind with the same penalty.
    pub fn mirror(self) -> Self {
        match self {
            EnvelopeKind::InfZ => EnvelopeKind::SupZ,
            EnvelopeKind::SupZ => EnvelopeKind::InfZ,
            EnvelopeKind::InfYz => EnvelopeKind::SupYz,
            EnvelopeKind::SupYz => EnvelopeKind::InfYz,
        }
    }

    fn sign(self) -> f64 {
        if self.is_inf() {
            1.0
        } else {
            -1.0
        }
    }
}

/// Grid sizes of the envelope search. Each penalty axis carries
/// `uniform` evenly spaced offsets per side plus `geometric` offsets
/// `span / 2^j`, which resolve the neighbourhood of the center when the
/// certified ball is large.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSettings {
    pub uniform: usize,
    pub geometric: usize,
    /// Axis sizes used for the 2-d and 3-d searches.
    pub uniform_nd: usize,
    pub geometric_nd: usize,
    /// Number of grid points refined locally.
    pub refine: usize,
    /// Angular grid size for `d = 2`.
    pub angles: usize,
    /// Evaluation budget per local refinement.
    pub max_local_evals: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            uniform: 24,
            geometric: 10,
            uniform_nd: 10,
            geometric_nd: 8,
            refine: 8,
            angles: 12,
            max_local_evals: 4000,
        }
    }
}

/// A point `(t, b, y, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub t: f64,
    pub b: Vec<f64>,
    pub y: f64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct EnvelopeQuery<'a> {
    pub g: &'a GeneratorSpec,
    pub n: u32,
    pub t: f64,
    pub b: &'a [f64],
    pub y: f64,
    pub z: &'a [f64],
    pub kind: EnvelopeKind,
    pub tol: f64,
}

impl<'a> EnvelopeQuery<'a> {
    pub fn at(g: &'a GeneratorSpec, kind: EnvelopeKind, n: u32, p: &'a EnvelopePoint) -> Self {
        Self { g, n, t: p.t, b: &p.b, y: p.y, z: &p.z, kind, tol: DEFAULT_TOL }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub value: f64,
    /// Optimal `u` in the `y` slot (equals the query `y` for the z-kinds).
    pub arg_y: f64,
    /// Optimal point in the `z` slot.
    pub arg_z: Vec<f64>,
    pub radius_z: f64,
    /// Zero for the z-kinds.
    pub radius_y: f64,
    pub certified_gap: f64,
    /// False when the coercivity bound is unavailable (joint kinds at
    /// `n = 1`) and a fallback radius was used.
    pub radius_certified: bool,
    pub evals: usize,
}

/// Penalty constants resolved from the generator's declared parameters.
#[derive(Debug, Clone)]
struct PenaltyData {
    c: f64,
    alpha: f64,
    /// `lambda` for z-kinds, `C` for joint kinds.
    scale: f64,
    f: Process,
}

fn penalty_data(g: &GeneratorSpec, kind: EnvelopeKind, n: u32) -> Result<PenaltyData> {
    if n == 0 {
        return Err(Error::InvalidArgument("envelope index n must be >= 1".into()));
    }
    if kind.is_joint() {
        let p = &g.params;
        match (p.claims(Assumption::H5), p.c, p.alpha) {
            (true, Some(c), Some(alpha)) => Ok(PenaltyData { c: n as f64 * c, alpha, scale: c, f: p.f.clone() }),
            _ => Err(Error::Contract(format!("{} envelope of {} requires H5 with C and alpha", kind.id(), g.label))),
        }
    } else {
        let gc = g.params.growth_constants().ok_or_else(|| {
            Error::Contract(format!("{} envelope of {} requires H4 (or H4'/H4'')", kind.id(), g.label))
        })?;
        Ok(PenaltyData { c: n as f64 + gc.lambda, alpha: gc.alpha, scale: gc.lambda, f: gc.f })
    }
}

/// `R = [2 lambda (f_t + |y| + |z|^alpha) / n]^{1/alpha} + tol`: for
/// `|u - z| > R` the penalized objective exceeds its value at `u = z`.
pub fn search_radius_z(g: &GeneratorSpec, n: u32, t: f64, b: &[f64], y: f64, z: &[f64], tol: f64) -> Result<f64> {
    let pd = penalty_data(g, EnvelopeKind::InfZ, n)?;
    Ok(radius_z(&pd, n, t, b, y, z, tol))
}

fn radius_z(pd: &PenaltyData, n: u32, t: f64, b: &[f64], y: f64, z: &[f64], tol: f64) -> f64 {
    let budget = 2.0 * pd.scale * (pd.f.eval(t, b) + math::abs(y) + math::powf(math::norm(z), pd.alpha));
    math::powf(budget / n as f64, 1.0 / pd.alpha) + tol
}

/// Radii `(R_y, R_z, certified)` for the joint kinds:
/// `|y - u| <= q` and `|z - v| <= q^{1/alpha}` with
/// `q = 2 (f_t + C|y| + C|z|^alpha) / ((n-1) C)`. At `n = 1` the bound is
/// void and `n - 1` is replaced by `1/2` (reported as uncertified).
pub fn search_radius_yz(
    g: &GeneratorSpec,
    n: u32,
    t: f64,
    b: &[f64],
    y: f64,
    z: &[f64],
    tol: f64,
) -> Result<(f64, f64, bool)> {
    let pd = penalty_data(g, EnvelopeKind::InfYz, n)?;
    Ok(radius_yz(&pd, n, t, b, y, z, tol))
}

fn radius_yz(pd: &PenaltyData, n: u32, t: f64, b: &[f64], y: f64, z: &[f64], tol: f64) -> (f64, f64, bool) {
    let c = pd.scale;
    let budget = 2.0 * (pd.f.eval(t, b) + c * math::abs(y) + c * math::powf(math::norm(z), pd.alpha));
    let (m, certified) = if n > 1 { ((n - 1) as f64, true) } else { (0.5, false) };
    let q = budget / (m * c);
    (q + tol, math::powf(q, 1.0 / pd.alpha) + tol, certified)
}

/// `sgn(tau) |tau|^{1/alpha}`.
#[inline]
fn tau_offset(tau: f64, inv_alpha: f64) -> f64 {
    if inv_alpha == 2.0 {
        tau * math::abs(tau)
    } else {
        math::sgn(tau) * math::powf(math::abs(tau), inv_alpha)
    }
}

#[inline]
fn radial(s: f64, inv_alpha: f64) -> f64 {
    if inv_alpha == 2.0 {
        s * s
    } else {
        math::powf(s, inv_alpha)
    }
}

/// Positive offsets in `(0, span]`: `uniform` even ones and `geometric`
/// halvings.
fn offsets(span: f64, uniform: usize, geometric: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (1..=uniform.max(1)).map(|j| span * j as f64 / uniform.max(1) as f64).collect();
    v.extend((1..=geometric).map(|j| span / (1u64 << j) as f64));
    v.sort_by(f64::total_cmp);
    // Uniform and geometric nodes can coincide up to rounding; a duplicate
    // would collapse a refinement bracket onto one side of its centre.
    v.dedup_by(|a, b| *a - *b <= 1e-12 * span);
    v
}

/// Grid on `[-span, span]` symmetric about 0, plus an optional extra node.
fn symmetric_axis(span: f64, uniform: usize, geometric: usize, extra: Option<f64>) -> Vec<f64> {
    let pos = offsets(span, uniform, geometric);
    let mut axis: Vec<f64> = pos.iter().rev().map(|x| -x).collect();
    axis.push(0.0);
    axis.extend(pos);
    insert_node(&mut axis, extra);
    axis
}

fn half_axis(span: f64, uniform: usize, geometric: usize, extra: Option<f64>) -> Vec<f64> {
    let mut axis = vec![0.0];
    axis.extend(offsets(span, uniform, geometric));
    insert_node(&mut axis, extra);
    axis
}

fn insert_node(axis: &mut Vec<f64>, extra: Option<f64>) {
    if let Some(x) = extra {
        let (lo, hi) = (axis[0], axis[axis.len() - 1]);
        let close = 1e-12 * (hi - lo);
        if x > lo && x < hi && !axis.iter().any(|a| math::abs(a - x) <= close) {
            let pos = axis.partition_point(|&a| a < x);
            axis.insert(pos, x);
        }
    }
}

/// Evaluates the envelope at a point.
pub fn envelope(q: &EnvelopeQuery<'_>) -> Result<EnvelopeResult> {
    envelope_with(q, &SearchSettings::default())
}

pub fn envelope_with(q: &EnvelopeQuery<'_>, settings: &SearchSettings) -> Result<EnvelopeResult> {
    let d = q.g.dim;
    if d > 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    if q.z.len() != d || q.b.len() != d {
        return Err(Error::InvalidArgument(format!(
            "point dimension mismatch: generator d={d}, b has {}, z has {}",
            q.b.len(),
            q.z.len()
        )));
    }
    if !(q.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", q.tol)));
    }
    let pd = penalty_data(q.g, q.kind, q.n)?;
    match (q.kind.is_joint(), d) {
        (false, 1) => envelope_z_1d(q, &pd, settings),
        (false, _) => envelope_z_2d(q, &pd, settings),
        (true, _) => envelope_yz(q, &pd, settings),
    }
}

fn eval_checked(g: &GeneratorSpec, t: f64, b: &[f64], y: f64, z: &[f64]) -> Result<f64> {
    let v = g.eval(t, b, y, z);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation { t, y, z: z.to_vec(), value: v })
    }
}

fn envelope_z_1d(q: &EnvelopeQuery<'_>, pd: &PenaltyData, st: &SearchSettings) -> Result<EnvelopeResult> {
    let (g, t, b, y, z0) = (q.g, q.t, q.b, q.y, q.z[0]);
    let sigma = q.kind.sign();
    let c = pd.c;
    let inv_alpha = 1.0 / pd.alpha;
    let radius = radius_z(pd, q.n, t, b, y, q.z, q.tol);
    let span = math::powf(radius, pd.alpha);
    let mut evals = 0usize;
    let mut obj = |tau: f64| -> Result<f64> {
        evals += 1;
        let u = [z0 + tau_offset(tau, inv_alpha)];
        Ok(sigma * eval_checked(g, t, b, y, &u)? + c * math::abs(tau))
    };
    // u = 0 is a common kink location.
    let tau_zero = -math::sgn(z0) * math::powf(math::abs(z0), pd.alpha);
    let axis = symmetric_axis(span, st.uniform, st.geometric, Some(tau_zero));
    let mut vals = Vec::with_capacity(axis.len());
    for &tau in &axis {
        vals.push(obj(tau)?);
    }
    let centre = axis.partition_point(|&a| a < 0.0);
    let mut best_tau = axis[centre];
    let mut best = vals[centre];
    let mut best_width = 0.0;
    let xtol = q.tol / (8.0 * c);
    for k in local_minima(&vals, st.refine) {
        let lo = axis[k.saturating_sub(1)];
        let hi = axis[(k + 1).min(axis.len() - 1)];
        let r = brent_min(&mut obj, lo, hi, axis[k], vals[k], xtol, 200)?;
        if r.fx < best || (r.fx == best && r.width < best_width) {
            best = r.fx;
            best_tau = r.x;
            best_width = r.width;
        }
    }
    Ok(EnvelopeResult {
        value: sigma * best,
        arg_y: y,
        arg_z: vec![z0 + tau_offset(best_tau, inv_alpha)],
        radius_z: radius,
        radius_y: 0.0,
        certified_gap: c * best_width,
        radius_certified: true,
        evals,
    })
}

fn envelope_z_2d(q: &EnvelopeQuery<'_>, pd: &PenaltyData, st: &SearchSettings) -> Result<EnvelopeResult> {
    let (g, t, b, y, z) = (q.g, q.t, q.b, q.y, q.z);
    let sigma = q.kind.sign();
    let c = pd.c;
    let inv_alpha = 1.0 / pd.alpha;
    let radius = radius_z(pd, q.n, t, b, y, z, q.tol);
    let span = math::powf(radius, pd.alpha);
    let mut evals = 0usize;
    // Coordinates (s, theta): u = z + s^{1/alpha} (cos theta, sin theta).
    let mut obj = |x: &[f64]| -> Result<f64> {
        evals += 1;
        let r = radial(x[0], inv_alpha);
        let u = [z[0] + r * math::cos(x[1]), z[1] + r * math::sin(x[1])];
        Ok(sigma * eval_checked(g, t, b, y, &u)? + c * x[0])
    };
    let zn = math::norm(z);
    let s_zero = math::powf(zn, pd.alpha);
    let theta_zero = if zn > 0.0 { normalize_angle(math::atan2(-z[1], -z[0])) } else { 0.0 };
    let s_axis = half_axis(span, st.uniform_nd, st.geometric_nd, Some(s_zero));
    let th_step = 2.0 * PI / st.angles as f64;
    let mut th_axis: Vec<f64> = (0..st.angles).map(|j| j as f64 * th_step).collect();
    insert_node(&mut th_axis, Some(theta_zero));
    let axes = [s_axis, th_axis];
    let min_step = [q.tol / (4.0 * c), 1e-9];
    let init = [span / st.uniform_nd.max(1) as f64, th_step];
    let (x, fx, steps) =
        grid_then_compass(&mut obj, &axes, &[0.0, 0.0], &[span, 2.0 * PI], &[false, true], &init, &min_step, st)?;
    let r = radial(x[0], inv_alpha);
    Ok(EnvelopeResult {
        value: sigma * fx,
        arg_y: y,
        arg_z: vec![z[0] + r * math::cos(x[1]), z[1] + r * math::sin(x[1])],
        radius_z: radius,
        radius_y: 0.0,
        certified_gap: 2.0 * c * steps[0],
        radius_certified: true,
        evals,
    })
}

fn normalize_angle(a: f64) -> f64 {
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

fn envelope_yz(q: &EnvelopeQuery<'_>, pd: &PenaltyData, st: &SearchSettings) -> Result<EnvelopeResult> {
    let (g, t, b, y, z) = (q.g, q.t, q.b, q.y, q.z);
    let d = z.len();
    let sigma = q.kind.sign();
    let c = pd.c;
    let inv_alpha = 1.0 / pd.alpha;
    let (ry, rz, certified) = radius_yz(pd, q.n, t, b, y, z, q.tol);
    let span = math::powf(rz, pd.alpha);
    let mut evals = 0usize;
    let (ku, kgeo) = (st.uniform_nd.max(1), st.geometric_nd);
    let w_axis = symmetric_axis(ry, ku, kgeo, Some(-y));
    if d == 1 {
        // Coordinates (w, tau): u = y + w, v = z + sgn(tau)|tau|^{1/alpha}.
        let z0 = z[0];
        let mut obj = |x: &[f64]| -> Result<f64> {
            evals += 1;
            let v = [z0 + tau_offset(x[1], inv_alpha)];
            Ok(sigma * eval_checked(g, t, b, y + x[0], &v)? + c * (math::abs(x[0]) + math::abs(x[1])))
        };
        let tau_zero = -math::sgn(z0) * math::powf(math::abs(z0), pd.alpha);
        let t_axis = symmetric_axis(span, ku, kgeo, Some(tau_zero));
        let axes = [w_axis, t_axis];
        let min_step = [q.tol / (8.0 * c); 2];
        let init = [ry / ku as f64, span / ku as f64];
        let (x, fx, steps) =
            grid_then_compass(&mut obj, &axes, &[-ry, -span], &[ry, span], &[false, false], &init, &min_step, st)?;
        return Ok(EnvelopeResult {
            value: sigma * fx,
            arg_y: y + x[0],
            arg_z: vec![z0 + tau_offset(x[1], inv_alpha)],
            radius_z: rz,
            radius_y: ry,
            certified_gap: 2.0 * c * (steps[0] + steps[1]),
            radius_certified: certified,
            evals,
        });
    }
    // d = 2: coordinates (w, s, theta).
    let mut obj = |x: &[f64]| -> Result<f64> {
        evals += 1;
        let r = radial(x[1], inv_alpha);
        let v = [z[0] + r * math::cos(x[2]), z[1] + r * math::sin(x[2])];
        Ok(sigma * eval_checked(g, t, b, y + x[0], &v)? + c * (math::abs(x[0]) + x[1]))
    };
    let zn = math::norm(z);
    let s_zero = math::powf(zn, pd.alpha);
    let theta_zero = if zn > 0.0 { normalize_angle(math::atan2(-z[1], -z[0])) } else { 0.0 };
    let s_axis = half_axis(span, ku, kgeo, Some(s_zero));
    let th_step = 2.0 * PI / st.angles as f64;
    let mut th_axis: Vec<f64> = (0..st.angles).map(|j| j as f64 * th_step).collect();
    insert_node(&mut th_axis, Some(theta_zero));
    let axes = [w_axis, s_axis, th_axis];
    let min_step = [q.tol / (8.0 * c), q.tol / (8.0 * c), 1e-9];
    let init = [ry / ku as f64, span / ku as f64, th_step];
    let (x, fx, steps) = grid_then_compass(
        &mut obj,
        &axes,
        &[-ry, 0.0, 0.0],
        &[ry, span, 2.0 * PI],
        &[false, false, true],
        &init,
        &min_step,
        st,
    )?;
    let r = radial(x[1], inv_alpha);
    Ok(EnvelopeResult {
        value: sigma * fx,
        arg_y: y + x[0],
        arg_z: vec![z[0] + r * math::cos(x[2]), z[1] + r * math::sin(x[2])],
        radius_z: rz,
        radius_y: ry,
        certified_gap: 2.0 * c * (steps[0] + steps[1]),
        radius_certified: certified,
        evals,
    })
}

/// Tensor grid over `axes`, then compass search from the best
/// `settings.refine` grid points. Returns `(x, f(x), final steps)`.
#[allow(clippy::too_many_arguments)]
fn grid_then_compass<F>(
    obj: &mut F,
    axes: &[Vec<f64>],
    lo: &[f64],
    hi: &[f64],
    periodic: &[bool],
    init: &[f64],
    min_step: &[f64],
    st: &SearchSettings,
) -> Result<(Vec<f64>, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let k = axes.len();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut idx = vec![0usize; k];
    let mut x = vec![0.0; k];
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        for c in (0..k).rev() {
            idx[c] = rem % axes[c].len();
            rem /= axes[c].len();
            x[c] = axes[c][idx[c]];
        }
        scored.push((obj(&x)?, flat));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let decode = |flat: usize| -> Vec<f64> {
        let mut rem = flat;
        let mut p = vec![0.0; k];
        for c in (0..k).rev() {
            p[c] = axes[c][rem % axes[c].len()];
            rem /= axes[c].len();
        }
        p
    };
    let mut best: Option<(Vec<f64>, f64, Vec<f64>)> = None;
    for &(f0, flat) in scored.iter().take(st.refine.max(1)) {
        let x0 = decode(flat);
        let r = compass_min(&mut *obj, lo, hi, periodic, &x0, f0, init, min_step, st.max_local_evals)?;
        if best.as_ref().is_none_or(|b| r.fx < b.1) {
            best = Some((r.x, r.fx, r.steps));
        }
    }
    Ok(best.expect("at least one start"))
}

/// The envelope as a generator. Evaluation failures surface as NaN, which
/// the solver reports as an evaluation error.
///
/// Declared parameters follow the envelope's proven properties: the z-kinds
/// keep `mu`, the (H4) constants and gain (H4'') with `gamma = n + lambda`;
/// the joint kinds are `nC`-Lipschitz in `y` and keep (H5).
pub fn approximant(g: &GeneratorSpec, kind: EnvelopeKind, n: u32, tol: f64) -> Result<GeneratorSpec> {
    approximant_with(g, kind, n, tol, SearchSettings::default())
}

pub fn approximant_with(
    g: &GeneratorSpec,
    kind: EnvelopeKind,
    n: u32,
    tol: f64,
    settings: SearchSettings,
) -> Result<GeneratorSpec> {
    if g.dim > 2 {
        return Err(Error::UnsupportedDimension(g.dim));
    }
    let pd = penalty_data(g, kind, n)?;
    let src = &g.params;
    let params = if kind.is_joint() {
        AssumptionParams {
            mu: Some(pd.c),
            lambda: None,
            alpha: Some(pd.alpha),
            c: src.c,
            gamma: Some(pd.c),
            f: src.f.clone(),
            rho: None,
            phi: None,
            flags: Flags::of(&[
                Assumption::H1Prime,
                Assumption::H2,
                Assumption::H3,
                Assumption::H4DoublePrime,
                Assumption::H5,
            ]),
        }
    } else {
        let mut flags = Flags::of(&[Assumption::H1Prime, Assumption::H4, Assumption::H4DoublePrime]);
        for a in [Assumption::H2, Assumption::H3] {
            if src.claims(a) {
                flags = flags.with(a);
            }
        }
        AssumptionParams {
            mu: src.mu,
            lambda: Some(pd.scale),
            alpha: Some(pd.alpha),
            c: None,
            gamma: Some(pd.c),
            f: pd.f.clone(),
            rho: None,
            phi: None,
            flags,
        }
    };
    let base = g.clone();
    let label = format!("{}[{}:n={}]", g.label, kind.id(), n);
    let spec = GeneratorSpec::new(label, g.dim, params, move |t, b, y, z| {
        let q = EnvelopeQuery { g: &base, n, t, b, y, z, kind, tol };
        envelope_with(&q, &settings).map(|r| r.value).unwrap_or(f64::NAN)
    });
    Ok(spec.with_eval_tol(tol))
}

/// The bound that dominates every approximant of `kind` in the direction of
/// the approximation:
///
/// * `InfZ`:  `h = g(y,0) + lambda(f + |y| + |z|^alpha)`
/// * `SupZ`:  `h = g(y,0) - lambda(f + |y| + |z|^alpha)`
/// * `InfYz`: `h = f + C(|y| + |z|^alpha)`
/// * `SupYz`: `h = -f - C(|y| + |z|^alpha)`
pub fn bounding_generator(g: &GeneratorSpec, kind: EnvelopeKind) -> Result<GeneratorSpec> {
    let pd = penalty_data(g, kind, 1)?;
    let sign = kind.sign();
    let (scale, alpha, f) = (pd.scale, pd.alpha, pd.f.clone());
    let mut flags = Flags::of(&[Assumption::H2]);
    if g.params.claims(Assumption::H3) {
        flags = flags.with(Assumption::H3);
    }
    let label = format!("{}[bound:{}]", g.label, kind.id());
    if kind.is_joint() {
        let params = AssumptionParams { mu: Some(scale), flags, ..Default::default() };
        return Ok(GeneratorSpec::new(label, g.dim, params, move |t, b, y, z| {
            sign * (f.eval(t, b) + scale * (math::abs(y) + math::powf(math::norm(z), alpha)))
        }));
    }
    let base = g.clone();
    let mu = g.params.mu.map(|m| m + scale);
    let params = AssumptionParams { mu, flags, ..Default::default() };
    Ok(GeneratorSpec::new(label, g.dim, params, move |t, b, y, z| {
        let zero = [0.0; 2];
        let g0 = base.eval(t, b, y, &zero[..z.len().min(2)]);
        g0 + sign * scale * (f.eval(t, b) + math::abs(y) + math::powf(math::norm(z), alpha))
    }))
}

/// A failed property at one point of a sequence or modulus check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub point: usize,
    pub n: u32,
    pub property: String,
    /// Amount by which the inequality (including its tolerance) fails.
    pub excess: f64,
}

/// Envelope values over an increasing index list at a set of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub kind: EnvelopeKind,
    pub tol: f64,
    pub n_list: Vec<u32>,
    /// `values[p][k]` is the envelope at point `p` and index `n_list[k]`.
    pub values: Vec<Vec<f64>>,
    pub certified_gaps: Vec<Vec<f64>>,
    pub g_values: Vec<f64>,
    pub violations: Vec<Violation>,
    /// Largest signed excess over all monotonicity checks (negative is
    /// slack).
    pub worst_order_excess: f64,
}

impl SequenceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates envelopes for every `n` in `n_list` at every point and checks:
/// monotonicity in `n` within `2 tol` (nondecreasing for inf kinds,
/// nonincreasing for sup kinds), the ordering against `g` within `tol`, and
/// the two-sided growth sandwich within `tol`.
pub fn envelope_sequence(
    g: &GeneratorSpec,
    kind: EnvelopeKind,
    n_list: &[u32],
    points: &[EnvelopePoint],
    tol: f64,
) -> Result<SequenceReport> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n_list must be nonempty and strictly increasing".into()));
    }
    let pd = penalty_data(g, kind, n_list[0])?;
    let sigma = kind.sign();
    let mut values = Vec::with_capacity(points.len());
    let mut gaps = Vec::with_capacity(points.len());
    let mut g_values = Vec::with_capacity(points.len());
    let mut violations = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for (p, pt) in points.iter().enumerate() {
        let gv = eval_checked(g, pt.t, &pt.b, pt.y, &pt.z)?;
        let zero = vec![0.0; pt.z.len()];
        let (centre, half_width) = if kind.is_joint() {
            (0.0, pd.f.eval(pt.t, &pt.b) + pd.scale * (math::abs(pt.y) + math::powf(math::norm(&pt.z), pd.alpha)))
        } else {
            (
                eval_checked(g, pt.t, &pt.b, pt.y, &zero)?,
                pd.scale * (pd.f.eval(pt.t, &pt.b) + math::abs(pt.y) + math::powf(math::norm(&pt.z), pd.alpha)),
            )
        };
        let mut row = Vec::with_capacity(n_list.len());
        let mut grow = Vec::with_capacity(n_list.len());
        for &n in n_list {
            let r = envelope(&EnvelopeQuery::at(g, kind, n, pt).with_tol(tol))?;
            row.push(r.value);
            grow.push(r.certified_gap);
            // Ordering against g: inf kinds below, sup kinds above.
            let excess = sigma * (r.value - gv) - tol;
            if excess > 0.0 {
                violations.push(Violation { point: p, n, property: "order_vs_g".into(), excess });
            }
            let excess = math::abs(r.value - centre) - half_width - tol;
            if excess > 0.0 {
                violations.push(Violation { point: p, n, property: "growth_sandwich".into(), excess });
            }
        }
        for k in 1..n_list.len() {
            let excess = sigma * (row[k - 1] - row[k]) - 2.0 * tol;
            worst = worst.max(excess);
            if excess > 0.0 {
                violations.push(Violation { point: p, n: n_list[k], property: "monotone_in_n".into(), excess });
            }
        }
        values.push(row);
        gaps.push(grow);
        g_values.push(gv);
    }
    Ok(SequenceReport {
        kind,
        tol,
        n_list: n_list.to_vec(),
        values,
        certified_gaps: gaps,
        g_values,
        violations,
        worst_order_excess: worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub kind: EnvelopeKind,
    pub n: u32,
    pub pairs_checked: usize,
    pub violations: Vec<Violation>,
    /// `max(|g_n(p1) - g_n(p2)| - bound)` over pairs, without the `2 tol`
    /// allowance.
    pub worst_slack: f64,
    pub witness: Option<usize>,
}

impl ModulusReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `|g_n(p1) - g_n(p2)| <= (n+lambda)|z1-z2|^alpha` (z-kinds, pairs
/// sharing `(t, b, y)`) or `nC(|y1-y2| + |z1-z2|^alpha)` (joint kinds, pairs
/// sharing `(t, b)`) within `2 tol`.
pub fn holder_modulus_check(
    g: &GeneratorSpec,
    n: u32,
    kind: EnvelopeKind,
    pairs: &[(EnvelopePoint, EnvelopePoint)],
    tol: f64,
) -> Result<ModulusReport> {
    let pd = penalty_data(g, kind, n)?;
    let mut violations = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for (k, (p1, p2)) in pairs.iter().enumerate() {
        if p1.t != p2.t || p1.b != p2.b || (!kind.is_joint() && p1.y != p2.y) {
            return Err(Error::InvalidArgument(format!("pair {k} does not share the fixed coordinates")));
        }
        let dz: Vec<f64> = p1.z.iter().zip(&p2.z).map(|(a, b)| a - b).collect();
        let mut bound = pd.c * math::powf(math::norm(&dz), pd.alpha);
        if kind.is_joint() {
            bound += pd.c * math::abs(p1.y - p2.y);
        }
        let v1 = envelope(&EnvelopeQuery::at(g, kind, n, p1).with_tol(tol))?.value;
        let v2 = envelope(&EnvelopeQuery::at(g, kind, n, p2).with_tol(tol))?.value;
        let slack = math::abs(v1 - v2) - bound;
        if slack > worst {
            worst = slack;
            witness = Some(k);
        }
        if slack > 2.0 * tol {
            violations.push(Violation { point: k, n, property: "modulus".into(), excess: slack - 2.0 * tol });
        }
    }
    Ok(ModulusReport { kind, n, pairs_checked: pairs.len(), violations, worst_slack: worst, witness })
}

/// Human-readable description of the penalty for a kind.
pub fn penalty_description(g: &GeneratorSpec, kind: EnvelopeKind, n: u32) -> Result<String> {
    let pd = penalty_data(g, kind, n)?;
    Ok(if kind.is_joint() {
        format!("{}*(|y-u| + |z-v|^{})", pd.c, pd.alpha)
    } else {
        format!("{}*|u-z|^{}", pd.c, pd.alpha)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{example1, example2, example3, Modulus};
    use crate::rng::{CounterRng, DrawKey};

    /// Frozen dense-grid value of `inf_u min(|u|,1) + |u-2|^{1/2}`.
    const MIN_ABS_ONE_AT_2: f64 = 1.0;

    fn zdep(label: &str, lambda: f64, f: f64, h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> GeneratorSpec {
        let params = AssumptionParams {
            mu: Some(0.0),
            lambda: Some(lambda),
            alpha: Some(0.5),
            f: Process::constant(f),
            flags: Flags::of(&[Assumption::H2, Assumption::H4]),
            ..Default::default()
        };
        GeneratorSpec::new(label, 1, params, move |_, _, _, z| h(z[0]))
    }

    /// Dense-grid oracle for `inf_u h(u) + c|u - z|^a` over `[z - r, z + r]`,
    /// with `u = z` on the grid.
    fn dense_inf(h: impl Fn(f64) -> f64, z: f64, c: f64, a: f64, r: f64, pitch: f64) -> f64 {
        let n = (r / pitch) as i64;
        (-n..=n)
            .map(|k| {
                let u = z + k as f64 * pitch;
                h(u) + c * (u - z).abs().powf(a)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn radius_formula() {
        let g = zdep("sqrt", 1.0, 0.0, |z| z.abs().sqrt());
        let r = search_radius_z(&g, 3, 0.5, &[0.0], 0.0, &[0.0], 1e-6).unwrap();
        assert_eq!(r, 1e-6);
        let g = zdep("sqrt", 1.0, 1.0, |z| z.abs().sqrt());
        let r = search_radius_z(&g, 8, 0.5, &[0.0], 0.0, &[1.0], 1e-6).unwrap();
        assert!((r - 0.25 - 1e-6).abs() < 1e-15);
        let r16 = search_radius_z(&g, 16, 0.5, &[0.0], 0.0, &[1.0], 0.0).unwrap();
        assert!((0.25 / r16 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn radius_excludes_better_points() {
        // Outside the ball the lower bound from the growth condition already
        // exceeds the value at u = z.
        let g = example1(1);
        let rng = CounterRng::new(11);
        for k in 0..200 {
            let t = 0.1 + 0.8 * rng.uniform(DrawKey::new(k, 0, 0, 1));
            let b = [rng.normal(DrawKey::new(k, 1, 0, 1))];
            let y = rng.normal(DrawKey::new(k, 2, 0, 1));
            let z = [2.0 * rng.normal(DrawKey::new(k, 3, 0, 1))];
            let n = 1 + (k % 8) as u32;
            let r = search_radius_z(&g, n, t, &b, y, &z, 0.0).unwrap();
            let at_z = g.eval(t, &b, y, &z);
            for s in [1.01, 1.5, 3.0, 10.0] {
                for dir in [-1.0, 1.0] {
                    let u = [z[0] + dir * s * r];
                    let obj = g.eval(t, &b, y, &u) + (n as f64 + 1.0) * (s * r).sqrt();
                    assert!(obj > at_z, "k={k} s={s}");
                }
            }
        }
    }

    #[test]
    fn z_independent_fixed_point() {
        let g = zdep("const", 1.0, 0.0, |_| 0.7);
        for kind in [EnvelopeKind::InfZ, EnvelopeKind::SupZ] {
            for n in [1, 5] {
                let p = EnvelopePoint { t: 0.5, b: vec![0.0], y: 0.3, z: vec![1.7] };
                let r = envelope(&EnvelopeQuery::at(&g, kind, n, &p)).unwrap();
                assert_eq!(r.value, 0.7);
                assert!(r.certified_gap <= DEFAULT_TOL);
            }
        }
    }

    #[test]
    fn sqrt_is_a_fixed_point() {
        let g = zdep("sqrt", 1.0, 1.0, |z| z.abs().sqrt());
        let rng = CounterRng::new(3);
        for k in 0..200 {
            let z = -10.0 + 20.0 * rng.uniform(DrawKey::new(k, 0, 0, 0));
            let n = 1 + (k % 4) as u32;
            let p = EnvelopePoint { t: 0.5, b: vec![0.0], y: 0.0, z: vec![z] };
            let r = envelope(&EnvelopeQuery::at(&g, EnvelopeKind::InfZ, n, &p)).unwrap();
            assert!((r.value - z.abs().sqrt()).abs() <= 2e-6, "z={z} n={n} got {}", r.value);
        }
    }

    #[test]
    fn min_abs_one_matches_dense_grid() {
        // inf_u min(|u|,1) + |u - 2|^{1/2} with penalty constant n + lambda = 1.
        let h = |u: f64| u.abs().min(1.0);
        let oracle = dense_inf(h, 2.0, 1.0, 0.5, 6.0, 1e-5);
        let mut g = zdep("minabs", 1.0, 1.0, h);
        g.params.lambda = Some(1e-12);
        let p = EnvelopePoint { t: 0.5, b: vec![0.0], y: 0.0, z: vec![2.0] };
        let r = envelope(&EnvelopeQuery::at(&g, EnvelopeKind::InfZ, 1, &p)).unwrap();
        assert!((r.value - oracle).abs() <= 2e-6, "{} vs {oracle}", r.value);
        assert_eq!(MIN_ABS_ONE_AT_2, oracle);
    }

    #[test]
    fn envelope_matches_dense_grid_on_example1() {
        let g = example1(1);
        let rng = CounterRng::new(5);
        for k in 0..40 {
            let t = 0.2 + 0.6 * rng.uniform(DrawKey::new(k, 0, 0, 2));
            let b = [rng.normal(DrawKey::new(k, 1, 0, 2))];
            let y = 2.0 * rng.normal(DrawKey::new(k, 2, 0, 2));
            let z = [3.0 * rng.normal(DrawKey::new(k, 3, 0, 2))];
            let n = [1u32, 2, 4][k as usize % 3];
            let p = EnvelopePoint { t, b: b.to_vec(), y, z: z.to_vec() };
            let r = envelope(&EnvelopeQuery::at(&g, EnvelopeKind::InfZ, n, &p)).unwrap();
            let radius = search_radius_z(&g, n, t, &b, y, &z, 0.0).unwrap();
            let oracle =
                dense_inf(|u| g.eval(t, &b, y, &[u]), z[0], n as f64 + 1.0, 0.5, radius, (radius / 2e5).max(1e-7));
            // The dense grid has its own discretization error near the cusp.
            assert!(r.value <= oracle + 1e-6, "k={k}: {} vs {oracle}", r.value);
            assert!(oracle - r.value <= 1e-3, "k={k}: {} vs {oracle}", r.value);
        }
    }

    #[test]
    fn ordering_and_monotonicity_example1() {
        let g = example1(1);
        let rng = CounterRng::new(9);
        let points: Vec<EnvelopePoint> = (0..25)
            .map(|k| EnvelopePoint {
                t: 0.05 + 0.9 * rng.uniform(DrawKey::new(k, 0, 0, 3)),
                b: vec![rng.normal(DrawKey::new(k, 1, 0, 3))],
                y: 2.0 * rng.normal(DrawKey::new(k, 2, 0, 3)),
                z: vec![3.0 * rng.normal(DrawKey::new(k, 3, 0, 3))],
            })
            .collect();
        for kind in [EnvelopeKind::InfZ, EnvelopeKind::SupZ] {
            let rep = envelope_sequence(&g, kind, &[1, 2, 4, 8, 16, 32], &points, DEFAULT_TOL).unwrap();
            assert!(rep.passed(), "{kind:?}: {:?}", rep.violations);
            for (row, gv) in rep.values.iter().zip(&rep.g_values) {
                let first = (row[0] - gv).abs();
                let last = (row[row.len() - 1] - gv).abs();
                assert!(last <= first + 1e-9);
            }
        }
    }

    #[test]
    fn sequence_rejects_unsorted_list() {
        let g = example1(1);
        assert!(envelope_sequence(&g, EnvelopeKind::InfZ, &[2, 1], &[], 1e-6).is_err());
    }

    #[test]
    fn holder_certificate_example1_and_example2() {
        let rng = CounterRng::new(21);
        let g1 = example1(1);
        let pairs: Vec<_> = (0..100)
            .map(|k| {
                let t = 0.1 + 0.8 * rng.uniform(DrawKey::new(k, 0, 0, 4));
                let b = vec![rng.normal(DrawKey::new(k, 1, 0, 4))];
                let y = rng.normal(DrawKey::new(k, 2, 0, 4));
                let z1 = 2.0 * rng.normal(DrawKey::new(k, 3, 0, 4));
                let z2 = z1 + 0.5 * rng.normal(DrawKey::new(k, 4, 0, 4));
                (EnvelopePoint { t, b: b.clone(), y, z: vec![z1] }, EnvelopePoint { t, b, y, z: vec![z2] })
            })
            .collect();
        let rep = holder_modulus_check(&g1, 4, EnvelopeKind::InfZ, &pairs, DEFAULT_TOL).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations);
        let g2 = example2(1, 0.5);
        let pairs: Vec<_> = (0..30)
            .map(|k| {
                let t = 0.5;
                let b = vec![rng.normal(DrawKey::new(k, 5, 0, 4))];
                let y1 = rng.normal(DrawKey::new(k, 6, 0, 4));
                let y2 = y1 + 0.3 * rng.normal(DrawKey::new(k, 7, 0, 4));
                let z1 = rng.normal(DrawKey::new(k, 8, 0, 4));
                let z2 = z1 + 0.3 * rng.normal(DrawKey::new(k, 9, 0, 4));
                (EnvelopePoint { t, b: b.clone(), y: y1, z: vec![z1] }, EnvelopePoint { t, b, y: y2, z: vec![z2] })
            })
            .collect();
        let rep = holder_modulus_check(&g2, 4, EnvelopeKind::InfYz, &pairs, DEFAULT_TOL).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations);
    }

    #[test]
    fn joint_envelope_of_lipschitz_in_y_is_fixed() {
        // g = 0.5 y, C = 1: nC >= 0.5 so the joint envelope equals g.
        let params = AssumptionParams {
            c: Some(1.0),
            alpha: Some(0.5),
            f: Process::constant(1.0),
            flags: Flags::of(&[Assumption::H5]),
            ..Default::default()
        };
        let g = GeneratorSpec::new("half_y", 1, params, |_, _, y, _| 0.5 * y);
        for kind in [EnvelopeKind::InfYz, EnvelopeKind::SupYz] {
            for n in [1, 2, 4] {
                let p = EnvelopePoint { t: 0.5, b: vec![0.0], y: -1.3, z: vec![0.4] };
                let r = envelope(&EnvelopeQuery::at(&g, kind, n, &p)).unwrap();
                assert!((r.value + 0.65).abs() <= 2e-6, "{kind:?} n={n}: {}", r.value);
            }
        }
    }

    #[test]
    fn example2_joint_sequence() {
        let g = example2(1, 0.5);
        let rng = CounterRng::new(33);
        let points: Vec<EnvelopePoint> = (0..12)
            .map(|k| EnvelopePoint {
                t: 0.5,
                b: vec![rng.normal(DrawKey::new(k, 1, 0, 5))],
                y: rng.normal(DrawKey::new(k, 2, 0, 5)),
                z: vec![rng.normal(DrawKey::new(k, 3, 0, 5))],
            })
            .collect();
        for kind in [EnvelopeKind::InfYz, EnvelopeKind::SupYz] {
            let rep = envelope_sequence(&g, kind, &[1, 2, 4, 8], &points, DEFAULT_TOL).unwrap();
            assert!(rep.passed(), "{kind:?}: {:?}", rep.violations);
        }
    }

    #[test]
    fn pointwise_convergence_along_sequences() {
        let g = example1(1);
        let (t, b, y, z) = (0.4, [0.7], 0.8, [1.3]);
        let target = g.eval(t, &b, y, &z);
        for kind in [EnvelopeKind::InfZ, EnvelopeKind::SupZ] {
            let err = |n: u32| {
                let yn = y + 1.0 / n as f64;
                let zn = [z[0] - 0.5 / n as f64];
                let p = EnvelopePoint { t, b: b.to_vec(), y: yn, z: zn.to_vec() };
                (envelope(&EnvelopeQuery::at(&g, kind, n, &p)).unwrap().value - target).abs()
            };
            assert!(err(64) < err(1), "{kind:?}");
        }
        // Joint kind: approach from the left in y at the discontinuity of
        // example 2.
        let g = example2(1, 0.5);
        let target = g.eval(0.5, &[0.2], 0.0, &[0.5]);
        let err = |n: u32| {
            let p = EnvelopePoint { t: 0.5, b: vec![0.2], y: -1.0 / n as f64, z: vec![0.5 + 0.3 / n as f64] };
            (envelope(&EnvelopeQuery::at(&g, EnvelopeKind::InfYz, n, &p)).unwrap().value - target).abs()
        };
        assert!(err(64) < err(1));
    }

    #[test]
    fn two_dimensional_envelopes() {
        let g = example3(2, 1.0);
        let p = EnvelopePoint { t: 0.3, b: vec![0.2, -0.1], y: 0.4, z: vec![0.6, -0.8] };
        let gv = g.eval(p.t, &p.b, p.y, &p.z);
        let lo = envelope(&EnvelopeQuery::at(&g, EnvelopeKind::InfZ, 4, &p)).unwrap();
        let hi = envelope(&EnvelopeQuery::at(&g, EnvelopeKind::SupZ, 4, &p)).unwrap();
        assert!(lo.value <= gv && gv <= hi.value);
        let g3 = example1(3);
        let p3 = EnvelopePoint { t: 0.3, b: vec![0.0; 3], y: 0.0, z: vec![0.0; 3] };
        assert_eq!(
            envelope(&EnvelopeQuery::at(&g3, EnvelopeKind::InfZ, 1, &p3)).unwrap_err(),
            Error::UnsupportedDimension(3)
        );
        let mut g2 = example2(2, 0.5);
        g2.params.phi = Some(Modulus::linear(1.0));
        let p2 = EnvelopePoint { t: 0.3, b: vec![0.2, -0.1], y: 0.4, z: vec![0.6, -0.8] };
        let v = envelope(&EnvelopeQuery::at(&g2, EnvelopeKind::InfYz, 3, &p2)).unwrap();
        assert!(v.value <= g2.eval(p2.t, &p2.b, p2.y, &p2.z) + 1e-6);
    }

    #[test]
    fn missing_assumption_is_a_contract_error() {
        let g = example2(1, 0.5);
        let p = EnvelopePoint { t: 0.5, b: vec![0.0], y: 0.0, z: vec![0.0] };
        assert!(matches!(envelope(&EnvelopeQuery::at(&g, EnvelopeKind::InfZ, 2, &p)), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_evaluation_is_reported() {
        let g = zdep("blowup", 1.0, 1.0, |z| if z > 0.5 { f64::NAN } else { z });
        let p = EnvelopePoint { t: 0.5, b: vec![0.0], y: 0.0, z: vec![0.4] };
        let err = envelope(&EnvelopeQuery::at(&g, EnvelopeKind::InfZ, 1, &p)).unwrap_err();
        assert!(matches!(err, Error::Evaluation { .. }));
    }

    #[test]
    fn approximant_wraps_envelope() {
        let g = example1(1);
        let a = approximant(&g, EnvelopeKind::InfZ, 4, 1e-6).unwrap();
        let p = EnvelopePoint { t: 0.4, b: vec![0.3], y: 0.2, z: vec![1.1] };
        let direct = envelope(&EnvelopeQuery::at(&g, EnvelopeKind::InfZ, 4, &p)).unwrap().value;
        assert_eq!(a.eval(p.t, &p.b, p.y, &p.z), direct);
        assert_eq!(a.params.gamma, Some(5.0));
        assert_eq!(a.eval_tol, 1e-6);
        let h = bounding_generator(&g, EnvelopeKind::InfZ).unwrap();
        assert!(h.eval(p.t, &p.b, p.y, &p.z) >= g.eval(p.t, &p.b, p.y, &p.z));
        let lo = bounding_generator(&g, EnvelopeKind::SupZ).unwrap();
        assert!(lo.eval(p.t, &p.b, p.y, &p.z) <= g.eval(p.t, &p.b, p.y, &p.z));
    }
}
