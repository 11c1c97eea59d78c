//! Least-squares projection onto a finite basis of the Brownian state, used
//! for the conditional expectations in the backward recursion.
//!
//! All sums run over paths in index order, so fits are reproducible
//! independent of how the caller parallelizes path work.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Fits with a Gram condition number above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisSpec {
    /// Normalized Hermite polynomials of total degree `<= degree` in
    /// `B_t / sqrt(t)`.
    Polynomial { degree: usize },
    /// Indicators of `bins` equiprobable bins of the first component of `B_t`.
    Local { bins: usize },
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec::Polynomial { degree: 3 }
    }
}

impl BasisSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BasisSpec::Polynomial { degree } if degree < 1 => {
                Err(Error::InvalidArgument("polynomial basis needs degree >= 1".into()))
            }
            BasisSpec::Local { bins } if bins < 2 => Err(Error::InvalidArgument("local basis needs >= 2 bins".into())),
            _ => Ok(()),
        }
    }

    /// Number of basis functions in dimension `dim`.
    pub fn size(&self, dim: usize) -> usize {
        match *self {
            BasisSpec::Polynomial { degree } => multi_indices(dim, degree).len(),
            BasisSpec::Local { bins } => bins,
        }
    }
}

/// Multi-indices of total degree `<= p`, graded, constant first.
fn multi_indices(dim: usize, p: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 0..=p {
        let mut cur = vec![0; dim];
        fill_indices(&mut out, &mut cur, 0, total);
    }
    out
}

fn fill_indices(out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, pos: usize, left: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k;
        fill_indices(out, cur, pos + 1, left - k);
    }
}

/// `He_k(x) / sqrt(k!)` for `k = 0..=p`, orthonormal under `N(0, 1)`.
fn hermite_row(x: f64, p: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if p == 0 {
        return;
    }
    out[1] = x;
    // He_{k+1} = x He_k - k He_{k-1}; normalized recurrence.
    for k in 1..p {
        let kf = k as f64;
        out[k + 1] = (x * out[k] - math::sqrt(kf) * out[k - 1]) / math::sqrt(kf + 1.0);
    }
}

/// Basis functions evaluated on every path at one time node.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    /// Row-major `M x k` feature matrix.
    Dense { k: usize, rows: Vec<f64> },
    /// Bin index per path.
    Bins { k: usize, bin: Vec<u32> },
}

impl Design {
    pub fn size(&self) -> usize {
        match self {
            Design::Dense { k, .. } | Design::Bins { k, .. } => *k,
        }
    }

    pub fn paths(&self) -> usize {
        match self {
            Design::Dense { k, rows } => rows.len() / k,
            Design::Bins { bin, .. } => bin.len(),
        }
    }

    /// Constant-only design.
    pub fn constant(paths: usize) -> Self {
        Design::Dense { k: 1, rows: vec![1.0; paths] }
    }

    /// Evaluates `spec` at the `M x d` row-major states `points` observed at
    /// time `t`. At `t = 0` the state is deterministic and the design is the
    /// constant function.
    pub fn build(spec: &BasisSpec, points: &[f64], dim: usize, t: f64) -> Result<Self> {
        spec.validate()?;
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument("state array does not match dimension".into()));
        }
        let paths = points.len() / dim;
        if paths == 0 {
            return Err(Error::InvalidArgument("no paths to regress on".into()));
        }
        if t <= 0.0 {
            return Ok(Self::constant(paths));
        }
        match *spec {
            BasisSpec::Polynomial { degree } => {
                let idx = multi_indices(dim, degree);
                let k = idx.len();
                let scale = 1.0 / math::sqrt(t);
                let mut rows = vec![0.0; paths * k];
                let mut he = vec![0.0; (degree + 1) * dim];
                for m in 0..paths {
                    for c in 0..dim {
                        hermite_row(
                            points[m * dim + c] * scale,
                            degree,
                            &mut he[c * (degree + 1)..(c + 1) * (degree + 1)],
                        );
                    }
                    for (j, mi) in idx.iter().enumerate() {
                        let mut v = 1.0;
                        for (c, &e) in mi.iter().enumerate() {
                            v *= he[c * (degree + 1) + e];
                        }
                        rows[m * k + j] = v;
                    }
                }
                Ok(Design::Dense { k, rows })
            }
            BasisSpec::Local { bins } => {
                let mut order: Vec<usize> = (0..paths).collect();
                order.sort_by(|&a, &b| points[a * dim].total_cmp(&points[b * dim]).then(a.cmp(&b)));
                let mut bin = vec![0u32; paths];
                for (rank, &m) in order.iter().enumerate() {
                    bin[m] = (rank * bins / paths) as u32;
                }
                Ok(Design::Bins { k: bins, bin })
            }
        }
    }
}

/// Least-squares coefficients for several targets at once.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    k: usize,
    targets: usize,
    /// `k x targets` row-major.
    coef: Vec<f64>,
    /// Root-mean-square residual per target.
    pub residual_rms: Vec<f64>,
    /// Condition number of the normalized Gram matrix.
    pub condition: f64,
}

impl Fit {
    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    /// Fitted values of every target on path `m`.
    pub fn predict_into(&self, design: &Design, m: usize, out: &mut [f64]) {
        match design {
            Design::Dense { k, rows } => {
                let row = &rows[m * k..(m + 1) * k];
                for (r, o) in out.iter_mut().enumerate().take(self.targets) {
                    *o = row.iter().enumerate().map(|(j, x)| x * self.coef[j * self.targets + r]).sum();
                }
            }
            Design::Bins { bin, .. } => {
                let j = bin[m] as usize;
                out[..self.targets].copy_from_slice(&self.coef[j * self.targets..(j + 1) * self.targets]);
            }
        }
    }
}

/// Regresses the `M x r` row-major `targets` on `design`. `step` labels a
/// [`Error::Basis`] failure.
pub fn fit(design: &Design, targets: &[f64], r: usize, step: usize) -> Result<Fit> {
    let paths = design.paths();
    let k = design.size();
    if r == 0 || targets.len() != paths * r {
        return Err(Error::InvalidArgument(format!(
            "target array has length {}, expected {}",
            targets.len(),
            paths * r
        )));
    }
    let inv_m = 1.0 / paths as f64;
    let (coef, condition) = match design {
        Design::Dense { rows, .. } => {
            let mut gram = vec![0.0; k * k];
            let mut rhs = vec![0.0; k * r];
            for m in 0..paths {
                let row = &rows[m * k..(m + 1) * k];
                let tg = &targets[m * r..(m + 1) * r];
                for a in 0..k {
                    let xa = row[a];
                    for b in a..k {
                        gram[a * k + b] += xa * row[b];
                    }
                    for (q, t) in tg.iter().enumerate() {
                        rhs[a * r + q] += xa * t;
                    }
                }
            }
            for a in 0..k {
                for b in a..k {
                    gram[a * k + b] *= inv_m;
                    gram[b * k + a] = gram[a * k + b];
                }
            }
            rhs.iter_mut().for_each(|v| *v *= inv_m);
            let condition = condition_number(&gram, k);
            if !(condition <= MAX_CONDITION) {
                return Err(Error::Basis { step, condition });
            }
            let l = cholesky(&gram, k).ok_or(Error::Basis { step, condition: f64::INFINITY })?;
            (cholesky_solve(&l, k, &rhs, r), condition)
        }
        Design::Bins { bin, .. } => {
            let mut count = vec![0usize; k];
            let mut sums = vec![0.0; k * r];
            for m in 0..paths {
                let j = bin[m] as usize;
                count[j] += 1;
                for q in 0..r {
                    sums[j * r + q] += targets[m * r + q];
                }
            }
            let (lo, hi) = (count.iter().min().copied().unwrap_or(0), count.iter().max().copied().unwrap_or(0));
            if lo == 0 {
                return Err(Error::Basis { step, condition: f64::INFINITY });
            }
            let condition = hi as f64 / lo as f64;
            for j in 0..k {
                for q in 0..r {
                    sums[j * r + q] /= count[j] as f64;
                }
            }
            (sums, condition)
        }
    };
    let mut out = Fit { k, targets: r, coef, residual_rms: vec![0.0; r], condition };
    let mut pred = vec![0.0; r];
    let mut ss = vec![0.0; r];
    for m in 0..paths {
        out.predict_into(design, m, &mut pred);
        for q in 0..r {
            let e = targets[m * r + q] - pred[q];
            ss[q] += e * e;
        }
    }
    out.residual_rms = ss.iter().map(|s| math::sqrt(s * inv_m)).collect();
    debug_assert_eq!(out.coef.len(), out.k * r);
    Ok(out)
}

/// Lower Cholesky factor of a symmetric positive definite `k x k` matrix.
fn cholesky(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * k + i] = math::sqrt(s);
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], k: usize, rhs: &[f64], r: usize) -> Vec<f64> {
    let mut x = rhs.to_vec();
    for q in 0..r {
        for i in 0..k {
            let mut s = x[i * r + q];
            for p in 0..i {
                s -= l[i * k + p] * x[p * r + q];
            }
            x[i * r + q] = s / l[i * k + i];
        }
        for i in (0..k).rev() {
            let mut s = x[i * r + q];
            for p in i + 1..k {
                s -= l[p * k + i] * x[p * r + q];
            }
            x[i * r + q] = s / l[i * k + i];
        }
    }
    x
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub(crate) fn symmetric_eigenvalues(a: &[f64], k: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let norm: f64 = m.iter().map(|v| v * v).sum::<f64>();
    for _sweep in 0..100 {
        let off: f64 = (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * k + j] * m[i * k + j])
            .sum();
        if off <= 1e-30 * norm.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = m[p * k + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * k + q] - m[p * k + p]) / (2.0 * apq);
                let t = math::sgn(theta) / (math::abs(theta) + math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for r in 0..k {
                    let (arp, arq) = (m[r * k + p], m[r * k + q]);
                    m[r * k + p] = c * arp - s * arq;
                    m[r * k + q] = s * arp + c * arq;
                }
                for r in 0..k {
                    let (apr, aqr) = (m[p * k + r], m[q * k + r]);
                    m[p * k + r] = c * apr - s * aqr;
                    m[q * k + r] = s * apr + c * aqr;
                }
            }
        }
    }
    (0..k).map(|i| m[i * k + i]).collect()
}

fn condition_number(gram: &[f64], k: usize) -> f64 {
    let ev = symmetric_eigenvalues(gram, k);
    let hi = ev.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let lo = ev.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}
