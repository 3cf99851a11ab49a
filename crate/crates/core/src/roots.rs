//! Safeguarded Newton iteration inside a maintained bisection bracket.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub xtol_abs: f64,
    pub xtol_rel: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions { xtol_abs: 1e-13, xtol_rel: 4.0 * f64::EPSILON, max_iter: 200 }
    }
}

/// Finds a root of `f` in `[lo, hi]`. `f` returns the value and the
/// derivative. A Newton step is taken only if it lands strictly inside the
/// current bracket and shrinks fast enough; otherwise the bracket is bisected.
pub fn safeguarded_newton<F>(mut f: F, lo: f64, hi: f64, opts: RootOptions) -> Result<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let fa = f(a).0;
    if fa == 0.0 {
        return Ok(a);
    }
    let fb = f(b).0;
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::NoRoot { lo: a, hi: b });
    }
    // keep f(a) < 0 < f(b) in the sense of `neg_at_a`
    let neg_at_a = fa < 0.0;
    let tol = |x: f64| opts.xtol_abs + opts.xtol_rel * x.abs();

    let mut x = 0.5 * (a + b);
    let mut step_old = b - a;
    let mut step = step_old;
    for _ in 0..opts.max_iter {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx < 0.0) == neg_at_a {
            a = x;
        } else {
            b = x;
        }
        let newton = x - fx / dfx;
        let inside = newton.is_finite() && newton > a && newton < b;
        let next = if inside && (2.0 * (newton - x)).abs() <= step_old.abs() {
            step_old = step;
            step = newton - x;
            newton
        } else {
            step_old = step;
            step = 0.5 * (b - a);
            a + step
        };
        if (b - a) <= tol(next) {
            return Ok(next);
        }
        if (next - x).abs() <= tol(next) {
            // a tiny Newton step only counts once a sign change confirms it
            let (fn_, _) = f(next);
            if fn_ == 0.0 {
                return Ok(next);
            }
            let root_right = (fn_ < 0.0) == neg_at_a;
            if root_right {
                a = next;
            } else {
                b = next;
            }
            let probe = if root_right { (next + tol(next)).min(b) } else { (next - tol(next)).max(a) };
            let (fp, _) = f(probe);
            if fp == 0.0 || (fp < 0.0) != (fn_ < 0.0) {
                return Ok(next);
            }
            if root_right {
                a = probe;
            } else {
                b = probe;
            }
            x = 0.5 * (a + b);
            step_old = b - a;
            step = step_old;
            continue;
        }
        x = next;
    }
    Err(Error::NotConverged { iterations: opts.max_iter })
}

/// Plain bisection on a monotone function, stopping when `|f| <= ftol` or the
/// bracket reaches roundoff.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, ftol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let fa = f(a);
    let fb = f(b);
    if fa.abs() <= ftol {
        return Ok(a);
    }
    if fb.abs() <= ftol {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoRoot { lo, hi });
    }
    let neg_at_a = fa < 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm.abs() <= ftol || m <= a || m >= b {
            return Ok(m);
        }
        if (fm < 0.0) == neg_at_a {
            a = m;
        } else {
            b = m;
        }
    }
    Err(Error::NotConverged { iterations: max_iter })
}
