//! The change of metric `dy = b dx / ((1+ε)² - x²)^((γ-1)/γ)` that turns the
//! critical power law into a corner, the induced coordinate `h`, and the
//! conjugate map `f̃ = h ∘ f ∘ h⁻¹`.
//!
//! With `R = 1 + ε` and `p = (γ-1)/γ`, the substitution `u = (R + x)^(1/γ)`
//! turns `∫ dx / (R² - x²)^p` into `∫ γ (2R - u^γ)^(-p) du`, whose integrand
//! is smooth on the left half of the domain. `h` is odd, so the right half
//! is handled by mirroring. Offsets `h(x) + 1` and `1 - h(x)` are produced
//! directly so that deep cylinders at the endpoints keep their relative
//! accuracy.

use serde::Serialize;

use crate::branches::{fit_decay, partition_levels, DecayFit, DEFAULT_DEPTH_CAP};
use crate::error::{Error, Result};
use crate::family::{FamilyKind, FamilyMap, IntervalMap, Side, DOMAIN};
use crate::point::{Pt, Span};
use crate::quadrature::{integrate, kronrod, QuadOptions};
use crate::roots::{safeguarded_newton, RootOptions};
use crate::scaling::{scale_with, ScalingEstimate};
use crate::symbolic::DualPoint;

const CACHE_CELLS: usize = 2048;

#[derive(Debug, Clone)]
pub struct MetricChange {
    pub gamma: f64,
    pub eps: f64,
    /// Normalization making `h(±1) = ±1`.
    pub b: f64,
    r: f64,
    p: f64,
    closed_form: bool,
    /// `G(k Δu)` for the primitive `G(u) = ∫_0^u γ (2R - t^γ)^(-p) dt`.
    cum: Vec<f64>,
    du: f64,
    /// `G(ε^(1/γ))`, the primitive at `x = -1`.
    g_left: f64,
}

impl MetricChange {
    /// The metric for exponent `gamma > 1` and parameter `eps ≥ 0`. The
    /// `γ = 2` case uses the arcsine closed form.
    pub fn new(gamma: f64, eps: f64) -> Result<Self> {
        Self::build(gamma, eps, gamma == 2.0)
    }

    /// Like [`MetricChange::new`] but always by quadrature.
    pub fn by_quadrature(gamma: f64, eps: f64) -> Result<Self> {
        Self::build(gamma, eps, false)
    }

    fn build(gamma: f64, eps: f64, closed_form: bool) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::NotApplicable(format!("metric change needs γ > 1, got {gamma}")));
        }
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::ParameterOutOfRange { value: eps, lo: 0.0, hi: f64::INFINITY });
        }
        let r = 1.0 + eps;
        let p = (gamma - 1.0) / gamma;
        let mut m = MetricChange {
            gamma,
            eps,
            b: 1.0,
            r,
            p,
            closed_form,
            cum: Vec::new(),
            du: 0.0,
            g_left: 0.0,
        };
        if closed_form {
            m.b = 1.0 / (1.0 / r).asin();
            return Ok(m);
        }
        let u_max = r.powf(1.0 / gamma);
        m.du = u_max / CACHE_CELLS as f64;
        m.cum = Vec::with_capacity(CACHE_CELLS + 1);
        m.cum.push(0.0);
        let mut acc = 0.0;
        for k in 0..CACHE_CELLS {
            let (v, _) = kronrod(&|t| m.g(t), k as f64 * m.du, (k + 1) as f64 * m.du);
            acc += v;
            m.cum.push(acc);
        }
        m.g_left = m.primitive(eps.powf(1.0 / gamma));
        m.b = 1.0 / (acc - m.g_left);
        Ok(m)
    }

    /// Integrand in the `u` variable.
    #[inline]
    fn g(&self, t: f64) -> f64 {
        self.gamma * (2.0 * self.r - t.powf(self.gamma)).powf(-self.p)
    }

    fn primitive(&self, u: f64) -> f64 {
        let u = u.max(0.0);
        let k = ((u / self.du) as usize).min(CACHE_CELLS - 1);
        let base = k as f64 * self.du;
        self.cum[k] + kronrod(&|t| self.g(t), base, u).0
    }

    /// Weight `((ε + s)(2 + ε - s))^(-p)` at `x = -1 + s`.
    #[inline]
    fn weight_left(&self, s: f64) -> f64 {
        ((self.eps + s) * (2.0 + self.eps - s)).powf(-self.p)
    }

    /// `∫_{-1}^{-1+t} dx / (R² - x²)^p` by direct quadrature, for `0 ≤ t ≤ ε`.
    fn near_left_integral(&self, t: f64) -> f64 {
        let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-15, max_intervals: 64 };
        integrate(|s| self.weight_left(s), 0.0, t, opts).map(|r| r.value).unwrap_or_else(|e| match e {
            // the tolerance sits at roundoff; the estimate is still far better than needed
            Error::Quadrature { .. } => kronrod(&|s| self.weight_left(s), 0.0, t).0,
            _ => unreachable!(),
        })
    }

    /// `h(x) + 1` for `x = -1 + t ≤ 0`; `t` may dip to `-ε`, which serves the
    /// mirrored evaluation at `x ∈ (1, 1 + ε]`.
    fn offset(&self, t: f64) -> f64 {
        let eps = self.eps;
        if self.closed_form {
            if eps == 0.0 && t <= 0.0 {
                return 0.0;
            }
            let x = t - 1.0;
            let hi = 2.0 - t;
            let q = ((eps + hi) * (eps + t).max(0.0)).sqrt();
            let c = (eps * (2.0 + eps)).sqrt();
            let sin = t * hi / (q - x * c);
            let cos = (q * c - x) / (self.r * self.r);
            return self.b * sin.atan2(cos);
        }
        if eps > 0.0 && (0.0..=eps).contains(&t) {
            return self.b * self.near_left_integral(t);
        }
        let u = (eps + t).max(0.0).powf(1.0 / self.gamma);
        self.b * (self.primitive(u) - self.g_left)
    }

    /// `h` with both offsets of the image.
    pub fn h_pt(&self, x: Pt) -> Pt {
        if x.x == 0.0 {
            return Pt::new(0.0, 1.0, 1.0);
        }
        if x.x < 0.0 {
            let lo = self.offset(x.lo);
            Pt::new(lo - 1.0, lo, 2.0 - lo)
        } else {
            let hi = self.offset(x.hi);
            Pt::new(1.0 - hi, 2.0 - hi, hi)
        }
    }

    pub fn h(&self, x: f64) -> Result<f64> {
        if !(-1.0..=self.r).contains(&x) {
            return Err(Error::OutOfDomain { x });
        }
        Ok(self.h_pt(Pt::from_x(x, DOMAIN)).x)
    }

    /// `h'(x)`.
    pub fn h_deriv_pt(&self, x: Pt) -> f64 {
        self.b * ((self.eps + x.lo) * (self.eps + x.hi)).powf(-self.p)
    }

    /// Length of `h(span)`.
    pub fn measure(&self, span: &Span) -> f64 {
        self.h_pt(span.hi).diff(&self.h_pt(span.lo)).max(0.0)
    }

    /// Solves `offset(t) = v` for `t ∈ [0, 1]`.
    fn offset_inv(&self, v: f64) -> Result<f64> {
        let v = v.clamp(0.0, 1.0);
        let eps = self.eps;
        if self.closed_form {
            // x + 1 = R (sin(θ + β) - sin β) with β = -arcsin(1/R), and
            // R cos(β + θ/2) expanded so nothing cancels near θ = 0
            let half = 0.5 * v / self.b;
            let c = (eps * (2.0 + eps)).sqrt();
            return Ok((2.0 * (c * half.cos() + half.sin()) * half.sin()).clamp(0.0, 1.0));
        }
        let opts = RootOptions { xtol_abs: 0.0, ..RootOptions::default() };
        let u0 = eps.powf(1.0 / self.gamma);
        let u1 = self.r.powf(1.0 / self.gamma);
        let target = v / self.b + self.g_left;
        let u = safeguarded_newton(|u| (self.primitive(u) - target, self.g(u)), u0, u1, opts)?;
        let t = u.powf(self.gamma) - eps;
        if eps > 0.0 && t <= eps {
            // redo in the offset itself to avoid the cancellation in u^γ - ε
            return safeguarded_newton(
                |t| (self.b * self.near_left_integral(t) - v, self.b * self.weight_left(t)),
                0.0,
                eps,
                opts,
            );
        }
        Ok(t.clamp(0.0, 1.0))
    }

    pub fn h_inv_pt(&self, y: Pt) -> Result<Pt> {
        if y.x <= 0.0 {
            Ok(Pt::from_lo(self.offset_inv(y.lo)?, DOMAIN))
        } else {
            Ok(Pt::from_hi(self.offset_inv(y.hi)?, DOMAIN))
        }
    }

    pub fn h_inv(&self, y: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&y) {
            return Err(Error::OutOfDomain { x: y });
        }
        Ok(self.h_inv_pt(Pt::from_x(y, DOMAIN))?.x)
    }
}

/// `2 / ∫_{-1}^{1} dx / ((1+ε)² - x²)^((γ-1)/γ)`.
pub fn b_const(gamma: f64, eps: f64) -> Result<f64> {
    Ok(MetricChange::new(gamma, eps)?.b)
}

fn metric_for(map: &FamilyMap) -> Result<MetricChange> {
    if map.family.kind == FamilyKind::Tent || map.family.gamma <= 1.0 {
        return Err(Error::NotApplicable("the tent has no critical power law to remove".into()));
    }
    MetricChange::new(map.family.gamma, map.eps)
}

/// `f̃ = h ∘ f ∘ h⁻¹` together with the metric it was built from.
#[derive(Debug, Clone)]
pub struct TildeMap {
    pub map: FamilyMap,
    pub metric: MetricChange,
}

impl TildeMap {
    pub fn new(map: &FamilyMap) -> Result<Self> {
        Ok(TildeMap { map: *map, metric: metric_for(map)? })
    }

    pub fn eval(&self, y: f64) -> Result<f64> {
        let x = self.metric.h_inv(y)?;
        let fx = self.map.eval_pt(Pt::from_x(x, DOMAIN));
        Ok(self.metric.h_pt(fx).x)
    }

    /// `f̃'(y)`; one-sided at the critical point.
    pub fn deriv(&self, y: f64, side: Option<Side>) -> Result<f64> {
        if !(-1.0..=1.0).contains(&y) {
            return Err(Error::OutOfDomain { x: y });
        }
        let g = self.map.family.gamma;
        let (eps, p, r) = (self.metric.eps, self.metric.p, self.metric.r);
        if y == 0.0 {
            let res = self.map.residual_limit(side.ok_or(Error::SideRequired)?);
            return Ok(res * r.powf(2.0 * p) / ((res.abs() / g).powf(p) * (2.0 * r).powf(p)));
        }
        if eps == 0.0 && y == -1.0 {
            return Ok(self.map.deriv_at(-1.0).powf(1.0 / g));
        }
        if eps == 0.0 && y == 1.0 {
            return Ok(-self.map.deriv_at(1.0).abs().powf(1.0 / g));
        }
        let x = self.metric.h_inv_pt(Pt::from_x(y, DOMAIN))?;
        let fx = self.map.eval_pt(x);
        let num = ((eps + x.lo) * (eps + x.hi)).powf(p);
        let den = ((eps + fx.lo) * self.map.below_critical_value(x)).powf(p);
        Ok(self.map.deriv_at(x.x) * num / den)
    }
}

pub fn tilde_eval(map: &FamilyMap, y: f64) -> Result<f64> {
    TildeMap::new(map)?.eval(y)
}

pub fn tilde_deriv(map: &FamilyMap, y: f64, side: Option<Side>) -> Result<f64> {
    TildeMap::new(map)?.deriv(y, side)
}

/// Scaling function of `f̃` along `a`: ratios of `h`-images of cylinders.
pub fn tilde_scaling(map: &FamilyMap, a: &DualPoint, depth: usize) -> Result<ScalingEstimate> {
    let metric = metric_for(map)?;
    tilde_scaling_with(map, &metric, a, depth)
}

pub fn tilde_scaling_with(
    map: &FamilyMap,
    metric: &MetricChange,
    a: &DualPoint,
    depth: usize,
) -> Result<ScalingEstimate> {
    scale_with(map, a, depth, |s| metric.measure(s))
}

/// Decay fit of the maximal `h`-image cylinder length.
pub fn tilde_decay_rate(map: &FamilyMap, n_max: usize) -> Result<DecayFit> {
    let metric = metric_for(map)?;
    let levels = partition_levels(map, n_max, DEFAULT_DEPTH_CAP)?;
    let lambdas: Vec<f64> =
        levels.iter().map(|p| p.spans.iter().map(|s| metric.measure(s)).fold(0.0, f64::max)).collect();
    Ok(fit_decay(&lambdas))
}

/// The part of `[-1, 1]` between `I_{0000}` (next to `-1`) and `I_{10000}`
/// (next to `1`) of the quadratic map at `eps`.
pub fn middle_interval(eps: f64) -> Result<(f64, f64)> {
    let q = crate::family::MapFamily::quadratic().at(eps)?;
    let left = crate::branches::cylinder(&q, &"0000".parse()?)?;
    let right = crate::branches::cylinder(&q, &"10000".parse()?)?;
    Ok((left.hi(), right.lo()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Nonlinearity {
    pub value: f64,
    pub x: f64,
    /// `x` lies in the middle interval, where the `O(ε)` bound applies.
    pub in_middle: bool,
}

/// `n(q̃)(y) = ε(1+ε) / ((2(1+ε) - (2+ε)x²) √((1+ε)² - x²))` with `x = h⁻¹(y)`.
pub fn nonlinearity_tilde_q(eps: f64, y: f64) -> Result<Nonlinearity> {
    let metric = MetricChange::new(2.0, eps)?;
    let x = metric.h_inv(y)?;
    let r = 1.0 + eps;
    let value = eps * r / ((2.0 * r - (2.0 + eps) * x * x) * (r * r - x * x).sqrt());
    let (lo, hi) = middle_interval(eps)?;
    Ok(Nonlinearity { value, x, in_middle: (lo..=hi).contains(&x) })
}
