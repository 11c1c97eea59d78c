//! Small derivative-free optimizers used by the envelope search and the
//! implicit solver step.

use alloc::vec::Vec;

use crate::math;

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Outcome of a bracketed 1-d minimization.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Min1d {
    pub x: f64,
    pub fx: f64,
    /// Width of the final bracket around `x`.
    pub width: f64,
}

/// Brent's method on `[a, b]` started from an interior point `x0` with known
/// value `f0`. Stops when the bracket width is at most `4 * xtol`. Never
/// returns a point worse than `x0`.
pub(crate) fn brent_min<F, E>(
    mut f: F,
    a: f64,
    b: f64,
    x0: f64,
    f0: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<Min1d, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let (mut a, mut b) = (a.min(b), a.max(b));
    let (mut x, mut w, mut v) = (x0, x0, x0);
    let (mut fx, mut fw, mut fv) = (f0, f0, f0);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = xtol + 1e-15 * math::abs(x);
        let tol2 = 2.0 * tol1;
        if math::abs(x - xm) <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if math::abs(e) > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = math::abs(q);
            let etemp = e;
            e = d;
            if math::abs(p) < math::abs(0.5 * q * etemp) && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if math::abs(d) >= tol1 {
            x + d
        } else if d >= 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok(Min1d { x, fx, width: b - a })
}

/// Indices of grid-local minima of `vals`, best first, at most `k` of them.
pub(crate) fn local_minima(vals: &[f64], k: usize) -> Vec<usize> {
    let n = vals.len();
    let mut idx: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || vals[i] <= vals[i - 1];
            let right = i + 1 == n || vals[i] <= vals[i + 1];
            left && right
        })
        .collect();
    idx.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]).then(i.cmp(&j)));
    idx.truncate(k);
    idx
}

/// Result of a pattern search.
#[derive(Debug, Clone)]
pub(crate) struct MinNd {
    pub x: Vec<f64>,
    pub fx: f64,
    /// Final step per coordinate.
    pub steps: Vec<f64>,
}

/// Compass search inside the box `[lo, hi]` from `x0`. Coordinates flagged
/// periodic wrap around the box instead of being clamped. Each coordinate's
/// step halves on failure until it drops below `min_step`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn compass_min<F, E>(
    mut f: F,
    lo: &[f64],
    hi: &[f64],
    periodic: &[bool],
    x0: &[f64],
    f0: f64,
    init_step: &[f64],
    min_step: &[f64],
    max_evals: usize,
) -> Result<MinNd, E>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    let k = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f0;
    let mut steps = init_step.to_vec();
    let mut evals = 0;
    let mut trial = x.clone();
    while evals < max_evals {
        let mut improved = false;
        for c in 0..k {
            if steps[c] < min_step[c] {
                continue;
            }
            for dir in [1.0, -1.0] {
                trial.copy_from_slice(&x);
                let mut v = x[c] + dir * steps[c];
                if periodic[c] {
                    let span = hi[c] - lo[c];
                    if v >= hi[c] {
                        v -= span;
                    } else if v < lo[c] {
                        v += span;
                    }
                } else {
                    v = v.clamp(lo[c], hi[c]);
                }
                if v == x[c] {
                    continue;
                }
                trial[c] = v;
                let ft = f(&trial)?;
                evals += 1;
                if ft < fx {
                    fx = ft;
                    x.copy_from_slice(&trial);
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            let mut any = false;
            for c in 0..k {
                if steps[c] >= min_step[c] {
                    steps[c] *= 0.5;
                    any |= steps[c] >= min_step[c];
                }
            }
            if !any {
                break;
            }
        }
    }
    Ok(MinNd { x, fx, steps })
}

/// Outcome of [`solve_increasing`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct Root {
    pub x: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves `x = e + h(x)` where `x - h(x)` is nondecreasing, starting with a
/// fixed-point step and switching to safeguarded secant steps (Illinois
/// variant once a sign change is bracketed). Converges when successive
/// iterates or the bracket are within `tol`.
pub(crate) fn solve_increasing<F>(mut h: F, e: f64, tol_rel: f64, slack: f64, max_iter: usize) -> Root
where
    F: FnMut(f64) -> f64,
{
    let resid = |x: f64, hx: f64| x - e - hx;
    let done = |a: f64, b: f64| math::abs(a - b) <= tol_rel * math::abs(a).max(1.0) + slack;
    let mut x0 = e;
    let h0 = h(x0);
    let mut r0 = resid(x0, h0);
    if !r0.is_finite() {
        return Root { x: f64::NAN, iterations: 1, converged: false };
    }
    if r0 == 0.0 {
        return Root { x: x0, iterations: 1, converged: true };
    }
    let mut x1 = e + h0;
    let mut bracket: Option<(f64, f64, f64, f64)> = None;
    let mut side = 0i8;
    for it in 1..=max_iter {
        let r1 = resid(x1, h(x1));
        if !r1.is_finite() {
            return Root { x: f64::NAN, iterations: it + 1, converged: false };
        }
        if r1 == 0.0 || done(x0, x1) {
            return Root { x: x1, iterations: it + 1, converged: true };
        }
        // Maintain a sign-change bracket (lo has r < 0, hi has r > 0).
        if (r0 < 0.0) != (r1 < 0.0) || bracket.is_some() {
            let (mut lo, mut rlo, mut hi, mut rhi) =
                bracket.unwrap_or(if r0 < 0.0 { (x0, r0, x1, r1) } else { (x1, r1, x0, r0) });
            if bracket.is_some() {
                if r1 < 0.0 {
                    lo = x1;
                    rlo = r1;
                    if side == -1 {
                        rhi *= 0.5;
                    }
                    side = -1;
                } else {
                    hi = x1;
                    rhi = r1;
                    if side == 1 {
                        rlo *= 0.5;
                    }
                    side = 1;
                }
            }
            if done(lo, hi) {
                let x = if -rlo < rhi { lo } else { hi };
                return Root { x, iterations: it + 1, converged: true };
            }
            bracket = Some((lo, rlo, hi, rhi));
            x0 = x1;
            r0 = r1;
            let mut next = lo - rlo * (hi - lo) / (rhi - rlo);
            if !(next >= lo && next <= hi) {
                next = 0.5 * (lo + hi);
            }
            if done(x0, next) {
                return Root { x: next, iterations: it + 1, converged: true };
            }
            x1 = next;
            continue;
        }
        // No bracket yet: secant step, falling back to a fixed-point step.
        let denom = r1 - r0;
        let mut next = if denom != 0.0 { x1 - r1 * (x1 - x0) / denom } else { f64::NAN };
        let slope = if x1 != x0 { denom / (x1 - x0) } else { 0.0 };
        if !next.is_finite() || slope <= 0.0 {
            next = x1 - r1;
        }
        // Overshoot past the secant root secures the bracket on the next pass.
        x0 = x1;
        r0 = r1;
        x1 = next;
    }
    // A bracketed sign change is always located by bisection. Evaluation
    // noise in `h` can stall the secant steps on a spurious jump.
    if let Some((mut lo, _, mut hi, _)) = bracket {
        let mut it = max_iter + 1;
        while !done(lo, hi) {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let r = resid(mid, h(mid));
            it += 1;
            if !r.is_finite() {
                return Root { x: f64::NAN, iterations: it, converged: false };
            }
            if r < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Root { x: 0.5 * (lo + hi), iterations: it, converged: true };
    }
    Root { x: x1, iterations: max_iter + 1, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::convert::Infallible;

    #[test]
    fn brent_finds_quadratic_minimum() {
        let f = |x: f64| -> Result<f64, Infallible> { Ok((x - 0.3) * (x - 0.3) + 1.0) };
        let r = brent_min(f, -1.0, 1.0, 0.0, 1.09, 1e-10, 200).unwrap();
        assert!((r.x - 0.3).abs() < 1e-8, "{r:?}");
        assert!(r.width <= 1e-8);
    }

    #[test]
    fn brent_handles_kink() {
        let f = |x: f64| -> Result<f64, Infallible> { Ok((x - 0.1).abs()) };
        let r = brent_min(f, -1.0, 1.0, 0.0, 0.1, 1e-9, 200).unwrap();
        assert!((r.x - 0.1).abs() < 1e-8);
    }

    #[test]
    fn local_minima_order() {
        let v = [3.0, 1.0, 2.0, 0.5, 4.0, 4.0, -1.0];
        assert_eq!(local_minima(&v, 2), vec![6, 3]);
        assert_eq!(local_minima(&v, 10), vec![6, 3, 1]);
    }

    #[test]
    fn compass_2d() {
        let f = |x: &[f64]| -> Result<f64, Infallible> { Ok((x[0] - 0.2).abs() + (x[1] + 0.4).powi(2)) };
        let r = compass_min(
            f,
            &[-1.0, -1.0],
            &[1.0, 1.0],
            &[false, false],
            &[0.0, 0.0],
            0.36,
            &[0.25, 0.25],
            &[1e-9, 1e-9],
            10_000,
        )
        .unwrap();
        assert!((r.x[0] - 0.2).abs() < 1e-8 && (r.x[1] + 0.4).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn increasing_root_linear_and_nonlinear() {
        // x = 1 + 0.02 * (-x)  =>  x = 1/1.02
        let r = solve_increasing(|x| -0.02 * x, 1.0, 1e-12, 0.0, 20);
        assert!(r.converged && (r.x - 1.0 / 1.02).abs() < 1e-12);
        // Steep monotone decreasing h: x = 0.5 - 0.02 * 3 * exp(x)
        let r = solve_increasing(|x| -0.06 * x.exp(), 0.5, 1e-12, 0.0, 20);
        assert!(r.converged);
        assert!((r.x - 0.5 + 0.06 * r.x.exp()).abs() < 1e-10);
        // Jump: h = -0.1 * 1_{x>0}, e = 0.05 has no exact root; the bracket
        // collapses onto the jump.
        let r = solve_increasing(|x| if x > 0.0 { -0.1 } else { 0.0 }, 0.05, 1e-10, 0.0, 60);
        assert!(r.converged && r.x.abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn bracket_is_finished_by_bisection() {
        // A small budget still locates a jump once it is bracketed.
        let r = solve_increasing(|x| if x > 0.3 { -0.5 } else { 0.0 }, 0.4, 1e-10, 0.0, 3);
        assert!(r.converged && (r.x - 0.3).abs() < 1e-9, "{r:?}");
        // Without a sign change the budget is binding.
        let r = solve_increasing(|x| 0.999 * x, 1.0, 1e-12, 0.0, 1);
        assert!(!r.converged);
    }
}
