//! Points of an interval carried together with their offsets from both
//! endpoints.
//!
//! Deep cylinders accumulate at the endpoints of the domain, where their
//! lengths fall far below the spacing of binary64 numbers near ±1. Every
//! map in this crate therefore propagates `x - left` and `right - x`
//! alongside `x`, each computed without cancellation, and lengths are taken
//! in whichever representation has the smallest operands.

/// A point `x` of a domain `[left, right]` with `lo = x - left` and
/// `hi = right - x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pt {
    pub x: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Coordinate chart used to difference two points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    /// Offset from the left endpoint.
    Lo,
    /// The raw coordinate.
    Mid,
    /// Negated offset from the right endpoint.
    Hi,
}

impl Pt {
    pub const fn new(x: f64, lo: f64, hi: f64) -> Self {
        Pt { x, lo, hi }
    }

    pub fn from_x(x: f64, domain: (f64, f64)) -> Self {
        Pt { x, lo: x - domain.0, hi: domain.1 - x }
    }

    pub fn from_lo(lo: f64, domain: (f64, f64)) -> Self {
        let width = domain.1 - domain.0;
        Pt { x: domain.0 + lo, lo, hi: width - lo }
    }

    pub fn from_hi(hi: f64, domain: (f64, f64)) -> Self {
        let width = domain.1 - domain.0;
        Pt { x: domain.1 - hi, lo: width - hi, hi }
    }

    pub fn left(domain: (f64, f64)) -> Self {
        Pt { x: domain.0, lo: 0.0, hi: domain.1 - domain.0 }
    }

    pub fn right(domain: (f64, f64)) -> Self {
        Pt { x: domain.1, lo: domain.1 - domain.0, hi: 0.0 }
    }

    /// Coordinate in `chart`; every chart is increasing in `x`.
    #[inline]
    pub fn coord(&self, chart: Chart) -> f64 {
        match chart {
            Chart::Lo => self.lo,
            Chart::Mid => self.x,
            Chart::Hi => -self.hi,
        }
    }

    /// Signed difference `self - other`.
    #[inline]
    pub fn diff(&self, other: &Pt) -> f64 {
        let chart = chart_for(&[*self, *other]);
        self.coord(chart) - other.coord(chart)
    }

    /// Distance between two points.
    #[inline]
    pub fn dist(&self, other: &Pt) -> f64 {
        self.diff(other).abs()
    }
}

/// Chart whose coordinates of `pts` have the smallest magnitudes.
pub fn chart_for(pts: &[Pt]) -> Chart {
    let (mut lo, mut mid, mut hi) = (0.0, 0.0, 0.0);
    for p in pts {
        lo += p.lo.abs();
        mid += p.x.abs();
        hi += p.hi.abs();
    }
    if lo <= mid && lo <= hi {
        Chart::Lo
    } else if hi <= mid {
        Chart::Hi
    } else {
        Chart::Mid
    }
}

/// Closed interval with ordered endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub lo: Pt,
    pub hi: Pt,
}

impl Span {
    pub fn new(a: Pt, b: Pt) -> Self {
        if a.diff(&b) <= 0.0 {
            Span { lo: a, hi: b }
        } else {
            Span { lo: b, hi: a }
        }
    }

    pub fn whole(domain: (f64, f64)) -> Self {
        Span { lo: Pt::left(domain), hi: Pt::right(domain) }
    }

    pub fn length(&self) -> f64 {
        self.hi.diff(&self.lo).max(0.0)
    }

    /// Distance from the left end of the span to the left end of the domain.
    pub fn offset_left(&self) -> f64 {
        self.lo.lo
    }

    /// Midpoint, formed in the chart the span is differenced in.
    pub fn midpoint(&self, domain: (f64, f64)) -> Pt {
        let chart = chart_for(&[self.lo, self.hi]);
        let m = 0.5 * (self.lo.coord(chart) + self.hi.coord(chart));
        match chart {
            Chart::Lo => Pt::from_lo(m, domain),
            Chart::Mid => Pt::from_x(m, domain),
            Chart::Hi => Pt::from_hi(-m, domain),
        }
    }

    /// Rounding error of [`Span::length`]: one ulp of the larger endpoint
    /// coordinate in the differencing chart.
    pub fn length_roundoff(&self) -> f64 {
        let chart = chart_for(&[self.lo, self.hi]);
        self.lo.coord(chart).abs().max(self.hi.coord(chart).abs()) * f64::EPSILON
    }

    pub fn contains(&self, p: &Pt, slack: f64) -> bool {
        p.diff(&self.lo) >= -slack && self.hi.diff(p) >= -slack
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const D: (f64, f64) = (-1.0, 1.0);

    #[test]
    fn offsets_dominate_near_endpoints() {
        let a = Pt::from_lo(1e-20, D);
        let b = Pt::from_lo(3e-20, D);
        assert_eq!(a.x, -1.0);
        assert!((b.dist(&a) - 2e-20).abs() < 1e-35);
        let c = Pt::from_hi(1e-18, D);
        assert!((Pt::right(D).dist(&c) - 1e-18).abs() < 1e-33);
    }

    #[test]
    fn span_orders_endpoints() {
        let s = Span::new(Pt::from_x(0.5, D), Pt::from_x(-0.25, D));
        assert_eq!(s.lo.x, -0.25);
        assert_eq!(s.length(), 0.75);
        assert!(s.contains(&Pt::from_x(0.0, D), 0.0));
        assert!(!s.contains(&Pt::from_x(0.6, D), 0.0));
    }
}
