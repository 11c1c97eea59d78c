//! Generators `g(t, b, y, z)`, their declared structural parameters, the
//! built-in example generators, terminal conditions and the truncation
//! `rho_k`.
//!
//! Randomness enters a generator only through the Markovian state `b = B_t`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr};
use crate::math;

/// Structural assumptions a generator may claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Assumption {
    /// Continuous in `(y, z)`, continuous in `y` uniformly in `z`.
    H1,
    /// Continuous in `(y, z)`.
    H1Prime,
    /// Left-continuous and lower semicontinuous in `y`, continuous in `z`.
    H1a,
    /// Right-continuous and upper semicontinuous in `y`, continuous in `z`.
    H1b,
    /// Monotone in `y` with constant `mu`.
    H2,
    /// Weakly monotone in `y` with modulus `rho`.
    H2Prime,
    /// `sup_{|y| <= r} |g(t, y, 0)|` integrable in `t`.
    H3,
    /// `|g(y,z) - g(y,0)| <= lambda (f + |y| + |z|^alpha)`.
    H4,
    /// `|g(y,z) - g(y,0)| <= lambda (f + |y| + |z|)^alpha`.
    H4Prime,
    /// Hoelder in `z` with constant `gamma` and exponent `alpha`.
    H4DoublePrime,
    /// Uniformly continuous in `z` with modulus `phi`.
    H4Star,
    /// `|g| <= f + C (|y| + |z|^alpha)`.
    H5,
}

impl Assumption {
    pub const ALL: [Assumption; 12] = [
        Assumption::H1,
        Assumption::H1Prime,
        Assumption::H1a,
        Assumption::H1b,
        Assumption::H2,
        Assumption::H2Prime,
        Assumption::H3,
        Assumption::H4,
        Assumption::H4Prime,
        Assumption::H4DoublePrime,
        Assumption::H4Star,
        Assumption::H5,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Assumption::H1 => "H1",
            Assumption::H1Prime => "H1'",
            Assumption::H1a => "H1a",
            Assumption::H1b => "H1b",
            Assumption::H2 => "H2",
            Assumption::H2Prime => "H2'",
            Assumption::H3 => "H3",
            Assumption::H4 => "H4",
            Assumption::H4Prime => "H4'",
            Assumption::H4DoublePrime => "H4''",
            Assumption::H4Star => "H4*",
            Assumption::H5 => "H5",
        }
    }

    /// Accepts the display ids plus ASCII spellings such as `H4prime`,
    /// `H4pp` and `H4star`.
    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase();
        let a = match norm.as_str() {
            "h1" => Assumption::H1,
            "h1'" | "h1prime" | "h1p" => Assumption::H1Prime,
            "h1a" => Assumption::H1a,
            "h1b" => Assumption::H1b,
            "h2" => Assumption::H2,
            "h2'" | "h2prime" | "h2p" => Assumption::H2Prime,
            "h3" => Assumption::H3,
            "h4" => Assumption::H4,
            "h4'" | "h4prime" | "h4p" => Assumption::H4Prime,
            "h4''" | "h4doubleprime" | "h4pp" => Assumption::H4DoublePrime,
            "h4*" | "h4star" | "h4s" => Assumption::H4Star,
            "h5" => Assumption::H5,
            _ => return Err(Error::UnknownLabel(format!("assumption '{s}'"))),
        };
        Ok(a)
    }

    fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Set of claimed assumptions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Flags(u16);

impl Flags {
    pub const fn empty() -> Self {
        Flags(0)
    }

    pub fn of(items: &[Assumption]) -> Self {
        items.iter().fold(Flags::empty(), |acc, a| acc.with(*a))
    }

    pub fn with(self, a: Assumption) -> Self {
        Flags(self.0 | a.bit())
    }

    pub fn contains(self, a: Assumption) -> bool {
        self.0 & a.bit() != 0
    }

    pub fn iter(self) -> impl Iterator<Item = Assumption> {
        Assumption::ALL.into_iter().filter(move |a| self.contains(*a))
    }
}

impl fmt::Display for Flags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        f.write_str("{")?;
        for a in self.iter() {
            if !first {
                f.write_str(",")?;
            }
            first = false;
            f.write_str(a.id())?;
        }
        f.write_str("}")
    }
}

pub type GeneratorFn = dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync;
pub type ProcessFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// A scalar modulus of continuity `u -> m(u)` on `[0, inf)`.
#[derive(Clone)]
pub struct Modulus {
    label: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Modulus {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), f: Arc::new(f) }
    }

    pub fn linear(slope: f64) -> Self {
        Self::new(format!("{slope}*u"), move |u| slope * u)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        (self.f)(u)
    }
}

impl fmt::Debug for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Modulus({})", self.label)
    }
}

/// The nonnegative process `f_t` appearing in the growth assumptions.
#[derive(Clone)]
pub struct Process {
    label: String,
    f: Arc<ProcessFn>,
}

impl Process {
    pub fn new(label: impl Into<String>, f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), f: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), move |_, _| c)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn eval(&self, t: f64, b: &[f64]) -> f64 {
        (self.f)(t, b)
    }
}

impl fmt::Debug for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Process({})", self.label)
    }
}

/// Declared constants and claimed assumptions of a generator.
#[derive(Debug, Clone)]
pub struct AssumptionParams {
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub f: Process,
    pub rho: Option<Modulus>,
    pub phi: Option<Modulus>,
    pub flags: Flags,
}

impl Default for AssumptionParams {
    fn default() -> Self {
        Self {
            mu: None,
            lambda: None,
            alpha: None,
            c: None,
            gamma: None,
            f: Process::constant(0.0),
            rho: None,
            phi: None,
            flags: Flags::empty(),
        }
    }
}

/// Constants for the `(H4)` growth bound, possibly derived from a stronger
/// claim.
#[derive(Debug, Clone)]
pub struct GrowthConstants {
    pub lambda: f64,
    pub alpha: f64,
    pub f: Process,
    /// True when obtained from `(H4')` or `(H4'')` rather than declared.
    pub derived: bool,
}

impl AssumptionParams {
    pub fn claims(&self, a: Assumption) -> bool {
        self.flags.contains(a)
    }

    /// `(H4)` constants. `(H4')` gives `lambda (f^alpha + 1 + |y| + |z|^alpha)`
    /// by subadditivity of `x^alpha` and `x^alpha <= 1 + x`; `(H4'')` gives
    /// `gamma (0 + |y| + |z|^alpha)`.
    pub fn growth_constants(&self) -> Option<GrowthConstants> {
        let alpha = self.alpha?;
        if self.claims(Assumption::H4) {
            return Some(GrowthConstants { lambda: self.lambda?, alpha, f: self.f.clone(), derived: false });
        }
        if self.claims(Assumption::H4Prime) {
            let base = self.f.clone();
            let label = format!("({})^{alpha}+1", base.label());
            let f = Process::new(label, move |t, b| math::powf(base.eval(t, b), alpha) + 1.0);
            return Some(GrowthConstants { lambda: self.lambda?, alpha, f, derived: true });
        }
        if self.claims(Assumption::H4DoublePrime) {
            return Some(GrowthConstants { lambda: self.gamma?, alpha, f: Process::constant(0.0), derived: true });
        }
        None
    }

    /// Checks the static parameter invariants. Moduli are probed on a grid in
    /// `[0, 10]`.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return bad(format!("alpha must lie in (0,1), got {a}"));
            }
        }
        if let Some(mu) = self.mu {
            if !(mu >= 0.0) {
                return bad(format!("mu must be >= 0, got {mu}"));
            }
        }
        for (name, v) in [("lambda", self.lambda), ("C", self.c), ("gamma", self.gamma)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return bad(format!("{name} must be > 0, got {v}"));
                }
            }
        }
        if let Some(rho) = &self.rho {
            if let Some(msg) = modulus_shape_violation(rho, true) {
                return bad(format!("rho modulus {}: {msg}", rho.label()));
            }
        }
        if let Some(phi) = &self.phi {
            if let Some(msg) = modulus_shape_violation(phi, false) {
                return bad(format!("phi modulus {}: {msg}", phi.label()));
            }
        }
        let needs = |a: Assumption, ok: bool, what: &str| -> Result<()> {
            if self.claims(a) && !ok {
                return Err(Error::InvalidArgument(format!("{a} claimed without {what}")));
            }
            Ok(())
        };
        needs(Assumption::H2, self.mu.is_some(), "mu")?;
        needs(Assumption::H4, self.lambda.is_some() && self.alpha.is_some(), "lambda and alpha")?;
        needs(Assumption::H4Prime, self.lambda.is_some() && self.alpha.is_some(), "lambda and alpha")?;
        needs(Assumption::H4DoublePrime, self.gamma.is_some() && self.alpha.is_some(), "gamma and alpha")?;
        needs(Assumption::H5, self.c.is_some() && self.alpha.is_some(), "C and alpha")?;
        needs(Assumption::H2Prime, self.rho.is_some(), "a rho modulus")?;
        needs(Assumption::H4Star, self.phi.is_some(), "a phi modulus")?;
        Ok(())
    }
}

/// Grid probe of modulus shape: `m(0) = 0`, nondecreasing, and concave when
/// `concave` is set.
pub(crate) fn modulus_shape_violation(m: &Modulus, concave: bool) -> Option<String> {
    const N: usize = 2001;
    const TOP: f64 = 10.0;
    let at0 = m.eval(0.0);
    if at0 != 0.0 {
        return Some(format!("m(0) = {at0}, expected 0"));
    }
    let h = TOP / (N - 1) as f64;
    let vals: Vec<f64> = (0..N).map(|k| m.eval(k as f64 * h)).collect();
    for k in 1..N {
        if !vals[k].is_finite() || vals[k] < 0.0 {
            return Some(format!("invalid value {} at u = {}", vals[k], k as f64 * h));
        }
        if vals[k] + 1e-12 < vals[k - 1] {
            return Some(format!("decreasing near u = {}", k as f64 * h));
        }
    }
    if concave {
        for k in 1..N - 1 {
            let second = vals[k + 1] - 2.0 * vals[k] + vals[k - 1];
            if second > 1e-9 * (1.0 + math::abs(vals[k])) {
                return Some(format!("not concave near u = {}", k as f64 * h));
            }
        }
    }
    None
}

/// A generator together with its declared assumption parameters.
#[derive(Clone)]
pub struct GeneratorSpec {
    eval: Arc<GeneratorFn>,
    pub params: AssumptionParams,
    pub label: String,
    pub dim: usize,
    /// Absolute accuracy of `eval`; nonzero for numerically evaluated
    /// generators such as envelopes.
    pub eval_tol: f64,
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("params", &self.params)
            .finish()
    }
}

impl GeneratorSpec {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        params: AssumptionParams,
        eval: impl Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { eval: Arc::new(eval), params, label: label.into(), dim, eval_tol: 0.0 }
    }

    pub fn with_eval_tol(mut self, tol: f64) -> Self {
        self.eval_tol = tol;
        self
    }

    #[inline]
    pub fn eval(&self, t: f64, b: &[f64], y: f64, z: &[f64]) -> f64 {
        (self.eval)(t, b, y, z)
    }

    /// Same generator with different declared parameters.
    pub fn with_params(mut self, params: AssumptionParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `g + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let inner = self.eval.clone();
        let mut params = self.params.clone();
        if params.claims(Assumption::H5) {
            let f = params.f.clone();
            params.f = Process::new(format!("{}+{}", f.label(), math::abs(c)), move |t, b| f.eval(t, b) + math::abs(c));
        }
        Self {
            eval: Arc::new(move |t, b, y, z| inner(t, b, y, z) + c),
            params,
            label: format!("{}+{c}", self.label),
            dim: self.dim,
            eval_tol: self.eval_tol,
        }
    }
}

type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Terminal condition `xi = eval(B_T)`.
#[derive(Clone)]
pub struct TerminalCondition {
    eval: TerminalFn,
    pub label: String,
    pub integrability_note: String,
    /// False when `xi` is integrable but not square-integrable; such
    /// terminals are only solved through truncation.
    pub square_integrable: bool,
}

impl fmt::Debug for TerminalCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TerminalCondition({})", self.label)
    }
}

impl TerminalCondition {
    pub fn new(
        label: impl Into<String>,
        note: impl Into<String>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { eval: Arc::new(eval), label: label.into(), integrability_note: note.into(), square_integrable: true }
    }

    pub fn heavy_tailed(mut self) -> Self {
        self.square_integrable = false;
        self
    }

    #[inline]
    pub fn eval(&self, b_terminal: &[f64]) -> f64 {
        (self.eval)(b_terminal)
    }

    /// `xi + other`.
    pub fn plus(&self, other: &TerminalCondition) -> Self {
        let (a, b) = (self.eval.clone(), other.eval.clone());
        let mut out =
            Self::new(format!("{}+{}", self.label, other.label), "sum of integrable terms", move |x| a(x) + b(x));
        out.square_integrable = self.square_integrable && other.square_integrable;
        out
    }
}

fn half_root(t: f64) -> f64 {
    1.0 / math::sqrt(t)
}

/// `g = -|b| e^y + (|y| + sqrt|z|) sin|z| + t^{-1/2} 1_{t>0} + |b|^2`,
/// claiming (H1)-(H4) with `mu = 1, lambda = 1, alpha = 1/2, f = 0`.
pub fn example1(dim: usize) -> GeneratorSpec {
    let params = AssumptionParams {
        mu: Some(1.0),
        lambda: Some(1.0),
        alpha: Some(0.5),
        f: Process::constant(0.0),
        flags: Flags::of(&[Assumption::H1, Assumption::H2, Assumption::H3, Assumption::H4]),
        ..Default::default()
    };
    GeneratorSpec::new("example1", dim, params, |t, b, y, z| {
        let nb = math::norm(b);
        let nz = math::norm(z);
        let singular = if t > 0.0 { half_root(t) } else { 0.0 };
        -nb * math::exp(y) + (math::abs(y) + math::sqrt(nz)) * math::sin(nz) + singular + nb * nb
    })
}

/// `g = 1_{y<=0} sin y + 1_{y>0} cos y + (|y| + ln(1+|z|)) sin(y^2 |z|^3) + b_1`,
/// claiming (H1a) and (H5) with `C = 1`. Since `ln(1+x) <= sqrt(x)`, the
/// growth bound holds with `f_t = 1 + |B_t^1|` when `alpha = 1/2`; for other
/// `alpha` the additive constant is reported empirically by the checker.
pub fn example2(dim: usize, alpha: f64) -> GeneratorSpec {
    let params = AssumptionParams {
        c: Some(1.0),
        alpha: Some(alpha),
        f: Process::new("1+|b1|", |_, b| 1.0 + math::abs(b[0])),
        flags: Flags::of(&[Assumption::H1a, Assumption::H5]),
        ..Default::default()
    };
    GeneratorSpec::new("example2", dim, params, |_, b, y, z| {
        let nz = math::norm(z);
        let step = if y <= 0.0 { math::sin(y) } else { math::cos(y) };
        step + (math::abs(y) + math::ln_1p(nz)) * math::sin(y * y * nz * nz * nz) + b[0]
    })
}

/// `g = |b|^2 e^{-y} + sqrt(1+|y|+|z|) + |z|^{1/3} + |t-T/2|^{-1/2} 1_{t != T/2}`,
/// claiming (H1)-(H3), (H4'), (H4*) with `mu = 1, lambda = 2, alpha = 1/2,
/// f = 1`. The moduli carried are `rho(u) = u` (from `mu = 1`) and
/// `phi(u) = u^{1/3} + u/2`.
pub fn example3(dim: usize, horizon: f64) -> GeneratorSpec {
    let params = AssumptionParams {
        mu: Some(1.0),
        lambda: Some(2.0),
        alpha: Some(0.5),
        f: Process::constant(1.0),
        rho: Some(Modulus::linear(1.0)),
        phi: Some(Modulus::new("u^(1/3)+u/2", |u| math::cbrt(u) + 0.5 * u)),
        flags: Flags::of(&[Assumption::H1, Assumption::H2, Assumption::H3, Assumption::H4Prime, Assumption::H4Star]),
        ..Default::default()
    };
    let mid = 0.5 * horizon;
    GeneratorSpec::new("example3", dim, params, move |t, b, y, z| {
        let nb = math::norm(b);
        let nz = math::norm(z);
        let singular = if t != mid { half_root(math::abs(t - mid)) } else { 0.0 };
        nb * nb * math::exp(-y) + math::sqrt(1.0 + math::abs(y) + nz) + math::cbrt(nz) + singular
    })
}

/// Example 3 plus `sin(1000 |z|^3)`: continuous, still of sublinear growth
/// (with `f = 2`), but not uniformly continuous in `z`. Used as a control run
/// where minimal and maximal approximants need not meet at moderate `n`.
pub fn oscillating_control(dim: usize, horizon: f64) -> GeneratorSpec {
    let base = example3(dim, horizon);
    let params = AssumptionParams {
        mu: Some(1.0),
        lambda: Some(2.0),
        alpha: Some(0.5),
        f: Process::constant(2.0),
        rho: Some(Modulus::linear(1.0)),
        flags: Flags::of(&[Assumption::H1, Assumption::H2, Assumption::H3, Assumption::H4]),
        ..Default::default()
    };
    GeneratorSpec::new("control_t10", dim, params, move |t, b, y, z| {
        let nz = math::norm(z);
        base.eval(t, b, y, z) + math::sin(1000.0 * nz * nz * nz)
    })
}

/// `g == c`.
pub fn constant(dim: usize, c: f64) -> GeneratorSpec {
    let params = AssumptionParams {
        mu: Some(0.0),
        lambda: Some(1.0),
        alpha: Some(0.5),
        c: Some(1.0),
        gamma: Some(1.0),
        f: Process::constant(math::abs(c)),
        rho: Some(Modulus::linear(0.0)),
        phi: Some(Modulus::linear(0.0)),
        flags: Flags::of(&[
            Assumption::H1,
            Assumption::H1Prime,
            Assumption::H1a,
            Assumption::H1b,
            Assumption::H2,
            Assumption::H2Prime,
            Assumption::H3,
            Assumption::H4,
            Assumption::H4Prime,
            Assumption::H4DoublePrime,
            Assumption::H4Star,
            Assumption::H5,
        ]),
    };
    GeneratorSpec::new(format!("const:{c}"), dim, params, move |_, _, _, _| c)
}

/// `g(y) = -y`.
pub fn neg_y(dim: usize) -> GeneratorSpec {
    let params = AssumptionParams {
        mu: Some(0.0),
        lambda: Some(1.0),
        alpha: Some(0.5),
        c: Some(1.0),
        f: Process::constant(0.0),
        rho: Some(Modulus::linear(0.0)),
        phi: Some(Modulus::linear(0.0)),
        flags: Flags::of(&[
            Assumption::H1,
            Assumption::H1Prime,
            Assumption::H1a,
            Assumption::H1b,
            Assumption::H2,
            Assumption::H2Prime,
            Assumption::H3,
            Assumption::H4,
            Assumption::H5,
        ]),
        ..Default::default()
    };
    GeneratorSpec::new("neg_y", dim, params, |_, _, y, _| -y)
}

/// `rho_k(y) = y k / max(|y|, k)`: identity on `[-k, k]`, radial clamp
/// outside.
#[inline]
pub fn truncate_y(y: f64, k: f64) -> f64 {
    if math::abs(y) <= k {
        y
    } else {
        math::sgn(y) * k
    }
}

/// Both sides of the growth inequality implied by (H2) and (H4):
/// `g(t,b,y,z) sgn(y) <= |g(t,b,0,0)| + lambda f_t + (lambda + mu)|y| + lambda |z|`.
///
/// Returns `(lhs, rhs)`. Uses derived (H4) constants when only (H4') or
/// (H4'') is claimed.
pub fn sign_growth_bound(g: &GeneratorSpec, t: f64, b: &[f64], y: f64, z: &[f64]) -> Result<(f64, f64)> {
    let mu = match (g.params.claims(Assumption::H2), g.params.mu) {
        (true, Some(mu)) => mu,
        _ => return Err(Error::Contract(format!("{} does not claim H2", g.label))),
    };
    let growth =
        g.params.growth_constants().ok_or_else(|| Error::Contract(format!("{} does not claim H4", g.label)))?;
    let zero = [0.0; 8];
    let z0 = &zero[..g.dim.min(8)];
    let lhs = g.eval(t, b, y, z) * math::sgn(y);
    let lam = growth.lambda;
    let rhs =
        math::abs(g.eval(t, b, 0.0, z0)) + lam * growth.f.eval(t, b) + (lam + mu) * math::abs(y) + lam * math::norm(z);
    Ok((lhs, rhs))
}

/// Definition of a generator written in the [`expr`](crate::expr) language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExprGeneratorDef {
    pub expr: String,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Expression in `t` and `b` for the process `f_t`; zero when absent.
    #[serde(default)]
    pub f: Option<String>,
    /// Linear moduli slopes for (H2') and (H4*).
    #[serde(default)]
    pub rho_slope: Option<f64>,
    #[serde(default)]
    pub phi_slope: Option<f64>,
    #[serde(default)]
    pub flags: Vec<String>,
}

fn one() -> usize {
    1
}

impl ExprGeneratorDef {
    pub fn build(&self, horizon: f64) -> Result<GeneratorSpec> {
        let expr = Expr::parse(&self.expr, self.dim, horizon)?;
        let f = match &self.f {
            Some(src) => {
                let fe = Expr::parse(src, self.dim, horizon)?;
                if fe.mentions("y") || fe.mentions("z") {
                    return Err(Error::InvalidArgument("f may depend on t and b only".into()));
                }
                Process::new(src.clone(), move |t, b| fe.eval(&Bindings { t, y: 0.0, b, z: &[] }))
            }
            None => Process::constant(0.0),
        };
        let mut flags = Flags::empty();
        for s in &self.flags {
            flags = flags.with(Assumption::parse(s)?);
        }
        let params = AssumptionParams {
            mu: self.mu,
            lambda: self.lambda,
            alpha: self.alpha,
            c: self.c,
            gamma: self.gamma,
            f,
            rho: self.rho_slope.map(Modulus::linear),
            phi: self.phi_slope.map(Modulus::linear),
            flags,
        };
        params.validate()?;
        let label = self.label.clone().unwrap_or_else(|| format!("expr:{}", self.expr));
        Ok(GeneratorSpec::new(label, self.dim, params, move |t, b, y, z| expr.eval(&Bindings { t, y, b, z })))
    }
}

/// Resolves a built-in generator label.
///
/// Labels: `example1`, `example2`, `example3`, `control_t10`, `neg_y`,
/// `zero`, `const:<c>`, and `expr:<expression>` (no declared assumptions).
pub fn generator_by_label(label: &str, dim: usize, horizon: f64) -> Result<GeneratorSpec> {
    let g = match label {
        "example1" => example1(dim),
        "example2" => example2(dim, 0.5),
        "example3" => example3(dim, horizon),
        "control_t10" => oscillating_control(dim, horizon),
        "neg_y" => neg_y(dim),
        "zero" => constant(dim, 0.0).with_label("zero"),
        _ => {
            if let Some(c) = label.strip_prefix("const:") {
                let c: f64 = c.trim().parse().map_err(|_| Error::UnknownLabel(label.to_string()))?;
                constant(dim, c)
            } else if let Some(src) = label.strip_prefix("expr:") {
                ExprGeneratorDef {
                    expr: src.to_string(),
                    dim,
                    label: Some(label.to_string()),
                    mu: None,
                    lambda: None,
                    alpha: None,
                    c: None,
                    gamma: None,
                    f: None,
                    rho_slope: None,
                    phi_slope: None,
                    flags: Vec::new(),
                }
                .build(horizon)?
            } else {
                return Err(Error::UnknownLabel(format!("generator '{label}'")));
            }
        }
    };
    Ok(g)
}

/// Resolves a terminal-condition label. `xi` is a function of `B_T`.
///
/// Labels: `zero`, `one`, `BT`, `BT2`, `absBT`, `negabsBT`, `BTplus1`,
/// `expBT2over4` (integrable for `T < 2`), `const:<c>`, `expr:<expression in b>`.
pub fn terminal_by_label(label: &str, dim: usize, horizon: f64) -> Result<TerminalCondition> {
    let xi = match label {
        "zero" => TerminalCondition::new("zero", "bounded", |_| 0.0),
        "one" => TerminalCondition::new("one", "bounded", |_| 1.0),
        "BT" => TerminalCondition::new("BT", "Gaussian", |b| b[0]),
        "BTplus1" => TerminalCondition::new("BTplus1", "Gaussian", |b| b[0] + 1.0),
        "BT2" => TerminalCondition::new("BT2", "all moments finite", |b| b[0] * b[0]),
        "absBT" => TerminalCondition::new("absBT", "all moments finite", math::norm),
        "negabsBT" => TerminalCondition::new("negabsBT", "all moments finite", |b| -math::norm(b)),
        "expBT2over4" => {
            if horizon >= 2.0 {
                return Err(Error::InvalidArgument("expBT2over4 is integrable only for T < 2".into()));
            }
            let xi = TerminalCondition::new("expBT2over4", "in L^1 for T < 2, not in L^2 for T >= 1", |b| {
                math::exp(b[0] * b[0] / 4.0)
            });
            if horizon >= 1.0 {
                xi.heavy_tailed()
            } else {
                xi
            }
        }
        _ => {
            if let Some(c) = label.strip_prefix("const:") {
                let c: f64 = c.trim().parse().map_err(|_| Error::UnknownLabel(label.to_string()))?;
                TerminalCondition::new(label, "bounded", move |_| c)
            } else if let Some(src) = label.strip_prefix("expr:") {
                let e = Expr::parse(src, dim, horizon)?;
                if e.mentions("y") || e.mentions("z") || e.mentions("t") {
                    return Err(Error::InvalidArgument("terminal expressions may use b only".into()));
                }
                TerminalCondition::new(label, "user supplied", move |b| {
                    e.eval(&Bindings { t: horizon, y: 0.0, b, z: &[] })
                })
            } else {
                return Err(Error::UnknownLabel(format!("terminal condition '{label}'")));
            }
        }
    };
    Ok(xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{CounterRng, DrawKey};

    fn sample(rng: &CounterRng, k: u64, scale: f64) -> f64 {
        scale * rng.normal(DrawKey::new(k, 0, 0, 7))
    }

    #[test]
    fn example1_params_and_values() {
        let g = example1(1);
        let p = &g.params;
        assert_eq!((p.mu, p.lambda, p.alpha), (Some(1.0), Some(1.0), Some(0.5)));
        assert_eq!(p.f.eval(0.3, &[1.0]), 0.0);
        for a in [Assumption::H1, Assumption::H2, Assumption::H3, Assumption::H4] {
            assert!(p.claims(a));
        }
        // -0*e^0 + (0 + 0) sin 0 + 1/sqrt(1) + 0
        assert_eq!(g.eval(1.0, &[0.0], 0.0, &[0.0]), 1.0);
        // The singular term is dropped at t = 0.
        assert_eq!(g.eval(0.0, &[0.0], 0.0, &[0.0]), 0.0);
        p.validate().unwrap();
    }

    #[test]
    fn example1_z_sublinearity_sampled() {
        let g = example1(1);
        let rng = CounterRng::new(1);
        for k in 0..1000 {
            let t = 0.01 + rng.uniform(DrawKey::new(k, 1, 0, 7));
            let b = [sample(&rng, k, 1.0)];
            let y = sample(&rng, k + 5000, 3.0);
            let z = [sample(&rng, k + 9000, 5.0)];
            let d = (g.eval(t, &b, y, &z) - g.eval(t, &b, y, &[0.0])).abs();
            assert!(d <= y.abs() + z[0].abs().sqrt() + 1e-12);
        }
    }

    #[test]
    fn example2_values() {
        let g = example2(1, 0.5);
        assert!(g.params.claims(Assumption::H1a) && g.params.claims(Assumption::H5));
        assert_eq!(g.params.c, Some(1.0));
        assert_eq!(g.eval(0.5, &[0.0], 0.0, &[0.0]), 0.0);
        // Right limit of the indicator part is cos 0 = 1.
        let right = g.eval(0.5, &[0.0], 1e-12, &[0.0]);
        assert!((right - 1.0).abs() < 1e-9);
        let rng = CounterRng::new(2);
        for k in 0..1000 {
            let b = [sample(&rng, k, 1.0)];
            let y = sample(&rng, k + 5000, 4.0);
            let z = [sample(&rng, k + 9000, 4.0)];
            let v = g.eval(0.5, &b, y, &z) - b[0];
            assert!(v.abs() <= 1.0 + y.abs() + (1.0 + z[0].abs()).ln() + 1e-12);
        }
    }

    #[test]
    fn example3_values() {
        let g = example3(1, 1.0);
        let p = &g.params;
        assert_eq!((p.mu, p.lambda, p.alpha), (Some(1.0), Some(2.0), Some(0.5)));
        assert_eq!(p.f.eval(0.1, &[0.0]), 1.0);
        let t = 0.9;
        let expected = 1.0 + 1.0 / (t - 0.5f64).abs().sqrt();
        assert!((g.eval(t, &[0.0], 0.0, &[0.0]) - expected).abs() < 1e-15);
        assert_eq!(g.eval(0.5, &[0.0], 0.0, &[0.0]), 1.0);
        let rng = CounterRng::new(3);
        for k in 0..1000 {
            let b = [sample(&rng, k, 1.0)];
            let y = sample(&rng, k + 5000, 4.0);
            let z = [sample(&rng, k + 9000, 4.0)];
            let d = (g.eval(0.3, &b, y, &z) - g.eval(0.3, &b, y, &[0.0])).abs();
            assert!(d <= 2.0 * (1.0 + y.abs() + z[0].abs()).sqrt() + 1e-12);
        }
        p.validate().unwrap();
    }

    #[test]
    fn derived_growth_constants() {
        let g = example3(1, 1.0);
        let gc = g.params.growth_constants().unwrap();
        assert!(gc.derived);
        assert_eq!(gc.lambda, 2.0);
        assert_eq!(gc.f.eval(0.0, &[0.0]), 2.0);
        assert!(!example1(1).params.growth_constants().unwrap().derived);
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate_y(0.5, 1.0), 0.5);
        assert_eq!(truncate_y(3.0, 1.0), 1.0);
        assert_eq!(truncate_y(-3.0, 1.0), -1.0);
        let rng = CounterRng::new(4);
        for k in 0..2000 {
            let a = sample(&rng, k, 3.0);
            let b = sample(&rng, k + 10_000, 3.0);
            assert!((truncate_y(a, 1.5) - truncate_y(b, 1.5)).abs() <= (a - b).abs());
            assert_eq!(truncate_y(truncate_y(a, 1.5), 1.5), truncate_y(a, 1.5));
        }
    }

    #[test]
    fn sign_growth() {
        let g = example1(1);
        let (lhs, rhs) = sign_growth_bound(&g, 0.5, &[0.3], 0.0, &[2.0]).unwrap();
        assert_eq!(lhs, 0.0);
        assert!(rhs >= 0.0);
        let rng = CounterRng::new(5);
        for g in [example1(1), example3(1, 1.0)] {
            for k in 0..1000 {
                let t = 0.01 + 0.98 * rng.uniform(DrawKey::new(k, 1, 0, 7));
                let b = [sample(&rng, k, 1.0)];
                let y = sample(&rng, k + 5000, 3.0);
                let z = [sample(&rng, k + 9000, 3.0)];
                let (lhs, rhs) = sign_growth_bound(&g, t, &b, y, &z).unwrap();
                assert!(lhs <= rhs + 1e-12, "{} at t={t} b={b:?} y={y} z={z:?}", g.label);
            }
        }
        assert!(matches!(sign_growth_bound(&example2(1, 0.5), 0.5, &[0.0], 1.0, &[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn sign_growth_needs_a_constant_for_small_z() {
        // g = sqrt|z| with f = 0 satisfies (H2) and (H4) but the linear-in-|z|
        // form of the bound fails for |z| < 1.
        let params = AssumptionParams {
            mu: Some(0.0),
            lambda: Some(1.0),
            alpha: Some(0.5),
            flags: Flags::of(&[Assumption::H2, Assumption::H4]),
            ..Default::default()
        };
        let g = GeneratorSpec::new("sqrtz", 1, params, |_, _, _, z| math::sqrt(math::abs(z[0])));
        let (lhs, rhs) = sign_growth_bound(&g, 0.5, &[0.0], 1e-6, &[0.01]).unwrap();
        assert!(lhs > rhs);
    }

    #[test]
    fn labels() {
        for l in ["example1", "example2", "example3", "control_t10", "neg_y", "zero", "const:2.5", "expr:y+zn"] {
            generator_by_label(l, 1, 1.0).unwrap();
        }
        assert!(matches!(generator_by_label("nope", 1, 1.0), Err(Error::UnknownLabel(_))));
        for l in ["zero", "one", "BT", "BT2", "absBT", "negabsBT", "BTplus1", "expBT2over4", "const:3", "expr:b^2"] {
            terminal_by_label(l, 1, 1.0).unwrap();
        }
        assert_eq!(terminal_by_label("expr:abs(b1)", 1, 1.0).unwrap().eval(&[-2.0]), 2.0);
        assert!(terminal_by_label("expr:y", 1, 1.0).is_err());
        assert!(terminal_by_label("expBT2over4", 1, 2.0).is_err());
    }

    #[test]
    fn expr_generator_roundtrip() {
        let def = ExprGeneratorDef {
            expr: "-y + sqrt(zn)".into(),
            dim: 1,
            label: None,
            mu: Some(0.0),
            lambda: Some(1.0),
            alpha: Some(0.5),
            c: None,
            gamma: None,
            f: Some("1 + bn".into()),
            rho_slope: None,
            phi_slope: None,
            flags: vec!["H2".into(), "H4".into()],
        };
        let g = def.build(1.0).unwrap();
        assert_eq!(g.eval(0.0, &[0.0], 1.0, &[4.0]), 1.0);
        assert_eq!(g.params.f.eval(0.0, &[2.0]), 3.0);
        let mut bad = def.clone();
        bad.alpha = Some(1.5);
        assert!(bad.build(1.0).is_err());
        let mut bad = def;
        bad.flags = vec!["H4''".into()];
        assert!(bad.build(1.0).is_err());
    }

    #[test]
    fn modulus_shape() {
        assert!(modulus_shape_violation(&Modulus::linear(2.0), true).is_none());
        assert!(modulus_shape_violation(&Modulus::new("u^2", |u| u * u), true).is_some());
        assert!(modulus_shape_violation(&Modulus::new("1+u", |u| 1.0 + u), false).is_some());
        assert!(modulus_shape_violation(&Modulus::new("sqrt", math::sqrt), true).is_none());
    }

    #[test]
    fn assumption_ids_roundtrip() {
        for a in Assumption::ALL {
            assert_eq!(Assumption::parse(a.id()).unwrap(), a);
        }
        assert_eq!(Assumption::parse("H4star").unwrap(), Assumption::H4Star);
        let f = Flags::of(&[Assumption::H2, Assumption::H4Prime]);
        assert_eq!(alloc::format!("{f}"), "{H2,H4'}");
    }
}
