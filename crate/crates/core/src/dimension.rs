//! Hausdorff dimension of the invariant Cantor set from the depth-`n`
//! pressure equation `Σ (|I_w|/2)^δ = 1`, the `1 - HD(ε) ~ √ε` law, the
//! `δ₀` formula and counts of strings with bounded zero runs.

use rayon::prelude::*;
use serde::Serialize;

use crate::branches::{partition, Partition, DEFAULT_DEPTH_CAP};
use crate::error::{Error, Result};
use crate::family::{FamilyMap, MapFamily};
use crate::roots::bisect;
use crate::stats::{compensated_sum, linear_fit};

/// Tolerance on the normalized pressure sum.
pub const PRESSURE_TOL: f64 = 1e-10;

const MIN_DEPTH: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionEstimate {
    pub epsilon: f64,
    pub depth: usize,
    pub delta: f64,
    /// `[min, max]` of the roots at `depth - 1` and `depth`.
    pub bracket: (f64, f64),
    /// `Σ (|I_w|/2)^δ - 1` at the returned root.
    pub residual: f64,
}

fn power_sum(lengths: &[f64], delta: f64, scale: f64) -> f64 {
    let partials: Vec<f64> = lengths
        .par_chunks(4096)
        .map(|c| compensated_sum(c.iter().map(|l| (l * scale).powf(delta))))
        .collect();
    compensated_sum(partials)
}

/// `Σ |I_w|^δ` over the cylinders of `p`.
pub fn pressure_sum(p: &Partition, delta: f64) -> f64 {
    power_sum(&p.lengths(), delta, 1.0)
}

fn normalized_root(lengths: &[f64]) -> Result<(f64, f64)> {
    let f = |d: f64| power_sum(lengths, d, 0.5) - 1.0;
    let delta = bisect(f, 0.0, 1.0, PRESSURE_TOL, 200)?;
    Ok((delta, f(delta)))
}

/// Root of the normalized pressure equation for `η_depth`, bracketed by the
/// root one level up.
pub fn hd_estimate(map: &FamilyMap, depth: usize) -> Result<DimensionEstimate> {
    if depth < MIN_DEPTH {
        return Err(Error::Degenerate(format!("dimension estimates need depth >= {MIN_DEPTH}")));
    }
    if depth > DEFAULT_DEPTH_CAP {
        return Err(Error::BudgetExceeded { depth, cap: DEFAULT_DEPTH_CAP });
    }
    let coarse = partition(map, depth - 1)?;
    let (prev, _) = normalized_root(&coarse.lengths())?;
    let fine = coarse.extend(map)?;
    let (delta, residual) = normalized_root(&fine.lengths())?;
    Ok(DimensionEstimate {
        epsilon: map.eps,
        depth,
        delta,
        bracket: (prev.min(delta), prev.max(delta)),
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionCurve {
    pub family: String,
    pub gamma: f64,
    pub rows: Vec<DimensionEstimate>,
    /// Least-squares slope of `log(1 - δ)` against `log ε`.
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    /// `(1 - δ) / ε^{1/γ}` at the smallest `ε` of the grid.
    pub corollary2_c: f64,
    /// `1 - δ(ε) ≥ 0.9 C ε^{1/γ}` across the grid.
    pub corollary2_holds: bool,
}

/// Dimension estimates over `eps_grid` and the exponent of `1 - HD(ε)`.
pub fn hd_curve(family: &MapFamily, eps_grid: &[f64], depth: usize) -> Result<DimensionCurve> {
    if eps_grid.len() < 2 || eps_grid.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Degenerate("dimension curve needs at least two positive ε".into()));
    }
    let rows: Vec<DimensionEstimate> =
        eps_grid.par_iter().map(|&e| hd_estimate(&family.at(e)?, depth)).collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| (1.0 - r.delta).ln()).collect();
    let fit = linear_fit(&xs, &ys)
        .ok_or_else(|| Error::Degenerate("dimension curve needs distinct ε".into()))?;
    let exp = 1.0 / family.gamma;
    let smallest = rows.iter().min_by(|a, b| a.epsilon.total_cmp(&b.epsilon)).expect("nonempty");
    let c = (1.0 - smallest.delta) / smallest.epsilon.powf(exp);
    let holds = rows.iter().all(|r| 1.0 - r.delta >= 0.9 * c * r.epsilon.powf(exp));
    Ok(DimensionCurve {
        family: family.label(),
        gamma: family.gamma,
        rows,
        slope: fit.slope,
        intercept: fit.intercept,
        residual: fit.max_residual,
        corollary2_c: c,
        corollary2_holds: holds,
    })
}

/// `δ₀ = log 2 / (log 2 - log(1 - C₆√ε))`, the root of `2((1 - C₆√ε)/2)^δ = 1`.
pub fn delta0(eps: f64, c6: f64) -> Result<f64> {
    if !(eps >= 0.0) || !(c6 >= 0.0) {
        return Err(Error::ParameterOutOfRange { value: eps.min(c6), lo: 0.0, hi: f64::INFINITY });
    }
    let q = c6 * eps.sqrt();
    if !(q < 1.0) {
        return Err(Error::ParameterOutOfRange { value: q, lo: 0.0, hi: 1.0 });
    }
    let ln2 = std::f64::consts::LN_2;
    Ok(ln2 / (ln2 - (-q).ln_1p()))
}

/// Largest `n` for which counts fit comfortably in a `u64`.
pub const ZERO_RUN_MAX_N: usize = 62;

/// Number of binary strings of length `n` whose longest run of zeros is
/// shorter than `max_run`, by a recurrence over the length of the trailing
/// zero run.
pub fn zero_run_count(n: usize, max_run: usize) -> Result<u64> {
    if n == 0 || n > ZERO_RUN_MAX_N {
        return Err(Error::ParameterOutOfRange { value: n as f64, lo: 1.0, hi: ZERO_RUN_MAX_N as f64 });
    }
    if max_run == 0 {
        return Err(Error::ParameterOutOfRange { value: 0.0, lo: 1.0, hi: f64::INFINITY });
    }
    // state[k] counts strings ending in exactly k zeros
    let mut state = vec![0u64; max_run];
    state[0] = 1;
    for _ in 0..n {
        let total: u64 = state.iter().sum();
        let mut next = vec![0u64; max_run];
        next[0] = total;
        next[1..max_run].copy_from_slice(&state[..max_run - 1]);
        state = next;
    }
    Ok(state.iter().sum())
}

/// The recursion `N_n = 2 N_{n-1} - 1` from `N_2 = 4`, kept to document
/// where it departs from [`zero_run_count`] (first at `n = 5`).
pub fn zero_run_recursion(n: usize) -> Result<u64> {
    if !(2..=ZERO_RUN_MAX_N).contains(&n) {
        return Err(Error::ParameterOutOfRange { value: n as f64, lo: 2.0, hi: ZERO_RUN_MAX_N as f64 });
    }
    Ok((2..n).fold(4u64, |acc, _| 2 * acc - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(n: usize, max_run: usize) -> u64 {
        (0u64..1 << n)
            .filter(|s| {
                let mut run = 0;
                for k in 0..n {
                    run = if s >> k & 1 == 0 { run + 1 } else { 0 };
                    if run >= max_run {
                        return false;
                    }
                }
                true
            })
            .count() as u64
    }

    #[test]
    fn pressure_examples() {
        let t0 = MapFamily::tent().at(0.0).unwrap();
        let p = partition(&t0, 8).unwrap();
        assert!((pressure_sum(&p, 1.0) - 2.0).abs() < 1e-12);
        assert_eq!(pressure_sum(&p, 0.0), 512.0);
        let t1 = MapFamily::tent().at(1.0).unwrap();
        let p = partition(&t1, 8).unwrap();
        let d = 2f64.ln() / 3f64.ln();
        let exact = 512.0 * (2.0 / 3f64.powi(9)).powf(d);
        assert!((pressure_sum(&p, d) / exact - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pressure_is_decreasing_in_delta() {
        let p = partition(&MapFamily::quadratic().at(0.2).unwrap(), 10).unwrap();
        let sums: Vec<f64> = (1..=15).map(|k| pressure_sum(&p, 0.1 * k as f64)).collect();
        assert!(sums.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn moran_oracles() {
        let e = hd_estimate(&MapFamily::tent().at(0.0).unwrap(), 14).unwrap();
        assert!((e.delta - 1.0).abs() < 1e-9, "{e:?}");
        for eps in [0.5, 1.0] {
            let e = hd_estimate(&MapFamily::tent().at(eps).unwrap(), 14).unwrap();
            let exact = 2f64.ln() / (2.0 + eps).ln();
            assert!((e.delta - exact).abs() < 1e-6, "{e:?}");
            assert!(e.residual.abs() <= PRESSURE_TOL);
        }
    }

    #[test]
    fn quadratic_bracket_is_narrow() {
        let q = MapFamily::quadratic().at(0.5).unwrap();
        let a = hd_estimate(&q, 14).unwrap();
        let b = hd_estimate(&q, 16).unwrap();
        assert!((a.delta - b.delta).abs() < 5e-3, "{a:?} {b:?}");
        assert!(b.delta > 0.0 && b.delta < 1.0);
    }

    #[test]
    fn cross_depth_stability() {
        for fam in [MapFamily::quadratic(), MapFamily::gamma_power(3.0).unwrap(), MapFamily::tent()] {
            let m = fam.at(0.3).unwrap();
            let a = hd_estimate(&m, 12).unwrap();
            let b = hd_estimate(&m, 14).unwrap();
            let width = (b.bracket.1 - b.bracket.0).max(1e-12);
            assert!((b.delta - a.delta).abs() < 10.0 * width, "{}: {a:?} {b:?}", fam.label());
        }
    }

    #[test]
    fn tent_curve_matches_closed_form() {
        let grid = crate::stats::log_space(1e-3, 1e-1, 5);
        let c = hd_curve(&MapFamily::tent(), &grid, 10).unwrap();
        for r in &c.rows {
            assert!((r.delta - 2f64.ln() / (2.0 + r.epsilon).ln()).abs() < 1e-6);
        }
        assert!((c.slope - 1.0).abs() < 0.05, "{}", c.slope);
    }

    #[test]
    fn corollary2_on_power_families() {
        let grid = crate::stats::log_space(1e-3, 1e-1, 5);
        for fam in [MapFamily::quadratic(), MapFamily::gamma_power(3.0).unwrap()] {
            let c = hd_curve(&fam, &grid, 12).unwrap();
            assert!(c.corollary2_holds, "{c:?}");
            assert!(c.rows.iter().all(|r| r.delta < 1.0));
        }
    }

    #[test]
    fn delta0_examples() {
        assert_eq!(delta0(0.0, 3.0).unwrap(), 1.0);
        assert!((delta0(0.25, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(delta0(1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn delta0_identity(c6 in 0.0f64..5.0, eps in 0.0f64..1.0) {
            prop_assume!(c6 * eps.sqrt() < 0.999);
            let d = delta0(eps, c6).unwrap();
            let q = c6 * eps.sqrt();
            prop_assert!((2.0 * ((1.0 - q) / 2.0).powf(d) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_run_examples() {
        assert_eq!(zero_run_count(2, 3).unwrap(), 4);
        assert_eq!(zero_run_count(4, 3).unwrap(), 13);
        assert_eq!(zero_run_count(5, 3).unwrap(), 24);
        assert_eq!(zero_run_recursion(5).unwrap(), 25);
        assert_eq!(zero_run_recursion(4).unwrap(), zero_run_count(4, 3).unwrap());
        assert!(zero_run_count(63, 3).is_err());
        assert!(zero_run_count(62, 3).is_ok());
    }

    #[test]
    fn zero_run_matches_brute_force() {
        for max_run in 1..=4 {
            for n in 1..=20 {
                assert_eq!(zero_run_count(n, max_run).unwrap(), brute_force(n, max_run), "n={n} r={max_run}");
            }
        }
        // tribonacci for runs below three
        for n in 4..=30 {
            let a = |k| zero_run_count(k, 3).unwrap();
            assert_eq!(a(n), a(n - 1) + a(n - 2) + a(n - 3));
        }
    }
}
