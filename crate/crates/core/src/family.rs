//! One-parameter unimodal map families on the normalized domain `[-1, 1]`.
//!
//! Every preset is affinely conjugated to `[-1, 1]` with its critical point
//! at `0`, both endpoints mapped to `-1` and critical value `1 + ε`. Ratio
//! quantities (scaling functions, gap ratios) are invariant under the
//! conjugation; [`RawMap`] evaluates a preset in its natural coordinates so
//! that invariance can be checked.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::branches;
use crate::error::{Error, Result};
use crate::point::Pt;

/// The normalized domain.
pub const DOMAIN: (f64, f64) = (-1.0, 1.0);

/// Step for first-derivative central differences.
pub const FD_STEP_FIRST: f64 = 1e-6;
/// Step for second/third-derivative stencils.
pub const FD_STEP_HIGHER: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Quadratic,
    GammaPower,
    Figure6,
    Tent,
    AsymQuadratic,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FamilyKind::Quadratic => "quadratic",
            FamilyKind::GammaPower => "gamma_power",
            FamilyKind::Figure6 => "figure6",
            FamilyKind::Tent => "tent",
            FamilyKind::AsymQuadratic => "asym_quadratic",
        };
        f.write_str(s)
    }
}

/// Which side of the critical point a one-sided quantity is taken on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Preset-specific coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FamilyParams {
    /// Quartic coefficient of the `figure6` family.
    pub c: f64,
    /// Asymmetry of `asym_quadratic`, `|beta| < 1`.
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapFamily {
    pub kind: FamilyKind,
    /// Critical exponent; `1` for the tent oracle.
    pub gamma: f64,
    /// Natural (un-normalized) domain of the preset.
    pub domain: (f64, f64),
    /// Admissible ε.
    pub param_range: (f64, f64),
    pub extra: FamilyParams,
    /// Hölder exponent of `f'` away from the critical point.
    pub alpha_prime: f64,
    /// Hölder exponent of the power-law residual.
    pub alpha_double_prime: f64,
}

const EPS_MAX: f64 = 10.0;

impl MapFamily {
    pub fn quadratic() -> Self {
        Self::power(FamilyKind::Quadratic, 2.0)
    }

    /// `1 + ε - (2 + ε)|x|^γ`.
    pub fn gamma_power(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidFamily(format!("gamma_power needs gamma > 1, got {gamma}")));
        }
        Ok(Self::power(FamilyKind::GammaPower, gamma))
    }

    pub fn tent() -> Self {
        let mut f = Self::power(FamilyKind::Tent, 1.0);
        f.alpha_double_prime = 1.0;
        f
    }

    /// `-x² + 2 + c x²(4 - x²)` on `[-2, 2]`, which sits on the boundary of
    /// hyperbolicity for every admissible `c`.
    pub fn figure6(c: f64) -> Result<Self> {
        if !(c.abs() < 0.25) {
            return Err(Error::InvalidFamily(format!(
                "figure6 needs |c| < 1/4 for unimodality, got {c}"
            )));
        }
        Ok(MapFamily {
            kind: FamilyKind::Figure6,
            gamma: 2.0,
            domain: (-2.0, 2.0),
            param_range: (0.0, 0.0),
            extra: FamilyParams { c, beta: 0.0 },
            alpha_prime: 1.0,
            alpha_double_prime: 1.0,
        })
    }

    /// Quadratic family pre-composed with `ψ(x) = x + β(|x| - x²)`, a
    /// homeomorphism fixing `-1, 0, 1` whose one-sided slopes at `0` are
    /// `1 - β` and `1 + β`.
    pub fn asym_quadratic(beta: f64) -> Result<Self> {
        if !(beta.abs() < 1.0) {
            return Err(Error::InvalidFamily(format!("asym_quadratic needs |beta| < 1, got {beta}")));
        }
        let mut f = Self::power(FamilyKind::AsymQuadratic, 2.0);
        f.extra.beta = beta;
        Ok(f)
    }

    fn power(kind: FamilyKind, gamma: f64) -> Self {
        MapFamily {
            kind,
            gamma,
            domain: DOMAIN,
            param_range: (0.0, EPS_MAX),
            extra: FamilyParams::default(),
            alpha_prime: 1.0,
            alpha_double_prime: if gamma < 2.0 { gamma - 1.0 } else { 1.0 },
        }
    }

    /// `min(α', α'')`.
    pub fn alpha(&self) -> f64 {
        self.alpha_prime.min(self.alpha_double_prime)
    }

    pub fn label(&self) -> String {
        match self.kind {
            FamilyKind::GammaPower => format!("gamma_power({})", self.gamma),
            FamilyKind::Figure6 => format!("figure6(c={})", self.extra.c),
            FamilyKind::AsymQuadratic => format!("asym_quadratic(beta={})", self.extra.beta),
            k => k.to_string(),
        }
    }

    fn check_eps(&self, eps: f64) -> Result<()> {
        let (lo, hi) = self.param_range;
        if eps.is_nan() || eps < lo || eps > hi {
            return Err(Error::ParameterOutOfRange { value: eps, lo, hi });
        }
        Ok(())
    }

    /// The family member at `eps`, ready for evaluation.
    pub fn at(&self, eps: f64) -> Result<FamilyMap> {
        self.check_eps(eps)?;
        Ok(FamilyMap { family: *self, eps })
    }

    /// The family member at `eps` in the preset's natural coordinates.
    pub fn raw_at(&self, eps: f64) -> Result<RawMap> {
        self.check_eps(eps)?;
        Ok(RawMap { family: *self, eps })
    }

    /// Maps a normalized coordinate to the natural domain.
    pub fn to_natural(&self, x: f64) -> f64 {
        let (a, b) = self.domain;
        0.5 * (a + b) + 0.5 * (b - a) * x
    }
}

/// A map of an interval into itself with accurate endpoint offsets, unimodal
/// with critical point `0`.
pub trait IntervalMap {
    fn domain(&self) -> (f64, f64);

    /// Image of `x` with offsets `f(x) - left` and `right - f(x)` carried
    /// accurately.
    fn eval_pt(&self, x: Pt) -> Pt;

    /// `f'(x)` for `x != 0`.
    fn deriv_at(&self, x: f64) -> f64;

    /// Preimage of `y` on `[left, 0]` (side 0) or `[0, right]` (side 1).
    fn inverse_branch_pt(&self, side: u8, y: Pt) -> Result<Pt> {
        branches::solve_branch(self, side, y)
    }

    fn eval(&self, x: f64) -> f64 {
        self.eval_pt(Pt::from_x(x, self.domain())).x
    }
}

/// A family member at a fixed parameter, on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyMap {
    pub family: MapFamily,
    pub eps: f64,
}

/// `(|x|, 1 - |x|, sign)` with `1 - |x|` taken from the endpoint offset.
#[inline]
fn abs_parts(x: &Pt) -> (f64, f64, f64) {
    if x.x < 0.0 {
        (-x.x, x.lo, -1.0)
    } else {
        (x.x, x.hi, 1.0)
    }
}

/// `(v, 1 - v)` for `v = a^γ` where `m = 1 - a`.
#[inline]
fn pow_and_complement(a: f64, m: f64, gamma: f64) -> (f64, f64) {
    if gamma == 1.0 {
        (a, m)
    } else if a <= 0.5 {
        let v = a.powf(gamma);
        (v, 1.0 - v)
    } else {
        let w = -(gamma * (-m).ln_1p()).exp_m1();
        (1.0 - w, w)
    }
}

#[inline]
fn pt_from_offsets(lo: f64, hi: f64) -> Pt {
    let x = if lo <= hi { lo - 1.0 } else { 1.0 - hi };
    Pt::new(x, lo, hi)
}

impl FamilyMap {
    #[inline]
    fn s(&self) -> f64 {
        2.0 + self.eps
    }

    /// `(|ψ(x)|, 1 - |ψ(x)|)` for the asymmetric preset.
    #[inline]
    fn asym_parts(&self, a: f64, m: f64, sign: f64) -> (f64, f64) {
        let beta = self.family.extra.beta;
        (a * (1.0 + sign * beta * (1.0 - a)), m * (1.0 - sign * beta * a))
    }

    pub fn eval_checked(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        Ok(self.eval_pt(Pt::from_x(x, DOMAIN)).x)
    }

    /// `f'(x)`. At `x = 0` the derivative vanishes for `γ > 1`; for the tent
    /// the one-sided slope on `side` is returned and `side` is required.
    pub fn deriv(&self, x: f64, side: Option<Side>) -> Result<f64> {
        check_domain(x)?;
        if x == 0.0 {
            if self.family.gamma > 1.0 {
                return Ok(0.0);
            }
            return match side {
                Some(Side::Left) => Ok(self.s()),
                Some(Side::Right) => Ok(-self.s()),
                None => Err(Error::SideRequired),
            };
        }
        Ok(self.deriv_at(x))
    }

    /// Second and third derivatives for `x != 0`, closed form where the
    /// preset has one and finite-difference stencils otherwise. `None` for
    /// the piecewise-linear tent.
    pub fn higher_derivs(&self, x: f64) -> Option<(f64, f64)> {
        let g = self.family.gamma;
        let (a, _, sign) = abs_parts(&Pt::from_x(x, DOMAIN));
        match self.family.kind {
            FamilyKind::Tent => None,
            FamilyKind::Quadratic | FamilyKind::GammaPower => {
                let k = -self.s() * g * (g - 1.0);
                Some((k * a.powf(g - 2.0), k * (g - 2.0) * a.powf(g - 3.0) * sign))
            }
            FamilyKind::Figure6 => {
                let c = self.family.extra.c;
                Some((2.0 * (8.0 * c - 2.0) - 96.0 * c * x * x, -192.0 * c * x))
            }
            FamilyKind::AsymQuadratic => {
                let h = FD_STEP_HIGHER;
                let d = |t: f64| self.deriv_at(t);
                let d2 = (d(x + h) - d(x - h)) / (2.0 * h);
                let d3 = (d(x + h) - 2.0 * d(x) + d(x - h)) / (h * h);
                Some((d2, d3))
            }
        }
    }

    /// `1 + ε - f(x)`, the distance below the critical value, without the
    /// cancellation of `ε + (1 - f(x))` near the critical point.
    pub fn below_critical_value(&self, x: Pt) -> f64 {
        let (a, m, sign) = abs_parts(&x);
        match self.family.kind {
            FamilyKind::Quadratic | FamilyKind::GammaPower | FamilyKind::Tent => {
                self.s() * pow_and_complement(a, m, self.family.gamma).0
            }
            FamilyKind::AsymQuadratic => {
                let (ap, mp) = self.asym_parts(a, m, sign);
                self.s() * pow_and_complement(ap, mp, self.family.gamma).0
            }
            FamilyKind::Figure6 => self.eps + self.eval_pt(x).hi,
        }
    }

    /// `f'(x) / |x|^(γ-1)`.
    pub fn power_law_residual(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        if x == 0.0 {
            return Err(Error::AtCriticalPoint);
        }
        Ok(self.deriv_at(x) / x.abs().powf(self.family.gamma - 1.0))
    }

    /// One-sided limit of the power-law residual at `0`: `A` on the left,
    /// `-B` on the right.
    pub fn residual_limit(&self, side: Side) -> f64 {
        let g = self.family.gamma;
        let sign = match side {
            Side::Left => 1.0,
            Side::Right => -1.0,
        };
        let k = match self.family.kind {
            FamilyKind::Quadratic | FamilyKind::GammaPower | FamilyKind::Tent => g * self.s(),
            FamilyKind::Figure6 => 4.0 - 16.0 * self.family.extra.c,
            FamilyKind::AsymQuadratic => {
                g * self.s() * (1.0 - sign * self.family.extra.beta).powf(g)
            }
        };
        sign * k
    }

    pub fn smoothness_report(&self, grid_size: usize) -> SmoothnessReport {
        let n = grid_size.max(4);
        let schwarzian_max = if self.family.kind == FamilyKind::Tent {
            None
        } else {
            let mut worst = f64::NEG_INFINITY;
            for k in 0..=n {
                let x = -1.0 + 2.0 * k as f64 / n as f64;
                if x.abs() < SCHWARZIAN_EXCLUSION {
                    continue;
                }
                if let Some((d2, d3)) = self.higher_derivs(x) {
                    let d1 = self.deriv_at(x);
                    let s = d3 / d1 - 1.5 * (d2 / d1).powi(2);
                    worst = worst.max(s);
                }
            }
            Some(worst)
        };
        let left = self.deriv_at(-1.0).abs();
        let right = self.deriv_at(1.0).abs();
        let holder = |side: f64| {
            let alpha = self.family.alpha_double_prime;
            let mut c: f64 = 0.0;
            for k in 1..40 {
                let x1 = side * 0.5f64.powi(k);
                let x2 = side * 0.5f64.powi(k + 1);
                let r1 = self.deriv_at(x1) / x1.abs().powf(self.family.gamma - 1.0);
                let r2 = self.deriv_at(x2) / x2.abs().powf(self.family.gamma - 1.0);
                c = c.max((r1 - r2).abs() / (x1 - x2).abs().powf(alpha));
            }
            c
        };
        SmoothnessReport {
            schwarzian_max,
            expanding_at_endpoints: left > 1.0 && right > 1.0,
            endpoint_derivatives: (left, right),
            residual_holder_estimate: (holder(-1.0), holder(1.0)),
        }
    }
}

/// Half-width of the neighborhood of `0` skipped when sampling the
/// Schwarzian derivative.
pub const SCHWARZIAN_EXCLUSION: f64 = 1e-2;

fn check_domain(x: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain { x });
    }
    Ok(())
}

impl IntervalMap for FamilyMap {
    fn domain(&self) -> (f64, f64) {
        DOMAIN
    }

    fn eval_pt(&self, x: Pt) -> Pt {
        let (a, m, sign) = abs_parts(&x);
        match self.family.kind {
            FamilyKind::Quadratic | FamilyKind::GammaPower | FamilyKind::Tent => {
                let (v, w) = pow_and_complement(a, m, self.family.gamma);
                pt_from_offsets(self.s() * w, self.s() * v - self.eps)
            }
            FamilyKind::AsymQuadratic => {
                let (ap, mp) = self.asym_parts(a, m, sign);
                let (v, w) = pow_and_complement(ap, mp, self.family.gamma);
                pt_from_offsets(self.s() * w, self.s() * v - self.eps)
            }
            FamilyKind::Figure6 => {
                let c = self.family.extra.c;
                let t = a * a;
                let omt = if a <= 0.5 { 1.0 - t } else { m * (2.0 - m) };
                pt_from_offsets(omt * (2.0 + 8.0 * c * t), 2.0 * t * (1.0 - 4.0 * c * omt))
            }
        }
    }

    fn deriv_at(&self, x: f64) -> f64 {
        let g = self.family.gamma;
        let a = x.abs();
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        match self.family.kind {
            FamilyKind::Quadratic | FamilyKind::GammaPower | FamilyKind::Tent => {
                -self.s() * g * a.powf(g - 1.0) * sign
            }
            FamilyKind::AsymQuadratic => {
                let beta = self.family.extra.beta;
                let ap = a * (1.0 + sign * beta * (1.0 - a));
                let dap = 1.0 + sign * beta * (1.0 - 2.0 * a);
                -self.s() * g * ap.powf(g - 1.0) * dap * sign
            }
            FamilyKind::Figure6 => {
                let c = self.family.extra.c;
                2.0 * x * (8.0 * c - 2.0 - 16.0 * c * x * x)
            }
        }
    }

    fn inverse_branch_pt(&self, side: u8, y: Pt) -> Result<Pt> {
        match self.family.kind {
            FamilyKind::Quadratic | FamilyKind::GammaPower | FamilyKind::Tent => {
                Ok(self.power_inverse(side, y))
            }
            _ => branches::solve_branch(self, side, y),
        }
    }
}

impl FamilyMap {
    /// Closed-form preimage for `1 + ε - (2 + ε)|x|^γ`.
    fn power_inverse(&self, side: u8, y: Pt) -> Pt {
        let g = self.family.gamma;
        let s = self.s();
        // r = (1 + ε - y)/(2 + ε) = |x|^γ, 1 - r = (1 + y)/(2 + ε)
        let r = ((self.eps + y.hi) / s).max(0.0);
        let one_minus_r = (y.lo / s).min(1.0);
        let (u, m) = if g == 1.0 {
            (r, one_minus_r)
        } else if r <= 0.5 {
            let u = r.powf(1.0 / g);
            (u, 1.0 - u)
        } else {
            let m = -((-one_minus_r).ln_1p() / g).exp_m1();
            (1.0 - m, m)
        };
        if side == 0 {
            Pt::new(-u, m, 1.0 + u)
        } else {
            Pt::new(u, 1.0 + u, m)
        }
    }
}

/// Smoothness diagnostics of a family member.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessReport {
    /// Maximum of the Schwarzian derivative on the sample grid; `None` when
    /// the Schwarzian is undefined (piecewise-linear maps).
    pub schwarzian_max: Option<f64>,
    pub expanding_at_endpoints: bool,
    /// `(|f'(-1)|, |f'(1)|)`.
    pub endpoint_derivatives: (f64, f64),
    /// Empirical Hölder constants of the power-law residual (left, right).
    pub residual_holder_estimate: (f64, f64),
}

/// Central finite difference of `f` at `x` with relative step
/// [`FD_STEP_FIRST`].
pub fn fd_derivative(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = FD_STEP_FIRST * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// A preset evaluated in its natural coordinates with plain arithmetic; its
/// inverse branches always go through the generic root finder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawMap {
    pub family: MapFamily,
    pub eps: f64,
}

impl RawMap {
    fn raw_value(&self, x: f64) -> f64 {
        let eps = self.eps;
        let fam = &self.family;
        match fam.kind {
            FamilyKind::Figure6 => {
                let c = fam.extra.c;
                -x * x + 2.0 + c * x * x * (4.0 - x * x)
            }
            FamilyKind::AsymQuadratic => {
                let beta = fam.extra.beta;
                let psi = x + beta * (x.abs() - x * x);
                1.0 + eps - (2.0 + eps) * psi.abs().powf(fam.gamma)
            }
            _ => 1.0 + eps - (2.0 + eps) * x.abs().powf(fam.gamma),
        }
    }
}

impl IntervalMap for RawMap {
    fn domain(&self) -> (f64, f64) {
        self.family.domain
    }

    fn eval_pt(&self, x: Pt) -> Pt {
        Pt::from_x(self.raw_value(x.x), self.family.domain)
    }

    fn deriv_at(&self, x: f64) -> f64 {
        let h = FD_STEP_FIRST * x.abs().max(1e-3);
        match self.family.kind {
            FamilyKind::Figure6 => {
                let c = self.family.extra.c;
                -2.0 * x + c * (8.0 * x - 4.0 * x * x * x)
            }
            _ => (self.raw_value(x + h) - self.raw_value(x - h)) / (2.0 * h),
        }
    }
}

/// Family specification record as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub beta: Option<f64>,
}

impl FamilySpec {
    pub fn build(&self) -> Result<MapFamily> {
        match self.kind {
            FamilyKind::Quadratic => Ok(MapFamily::quadratic()),
            FamilyKind::Tent => Ok(MapFamily::tent()),
            FamilyKind::GammaPower => {
                let g = self
                    .gamma
                    .or_else(|| self.params.get("gamma").copied())
                    .ok_or_else(|| Error::Config {
                        key: "family.gamma".into(),
                        message: "gamma_power needs a gamma".into(),
                    })?;
                MapFamily::gamma_power(g)
            }
            FamilyKind::Figure6 => {
                let c = self.params.get("c").copied().unwrap_or(0.0);
                MapFamily::figure6(c)
            }
            FamilyKind::AsymQuadratic => {
                let b = self.beta.or_else(|| self.params.get("beta").copied()).unwrap_or(0.0);
                MapFamily::asym_quadratic(b)
            }
        }
    }
}
