//! Gaps between sibling cylinders, the `ε^{1/γ}` law for their relative
//! size, and empirical checks of the distortion bounds along backward orbits.

use rand::Rng;
use serde::Serialize;

use crate::branches::{cylinder, cylinder_or_domain, partition_levels, pull_back, Partition, Word, DEFAULT_DEPTH_CAP};
use crate::error::{Error, Result};
use crate::family::{FamilyKind, FamilyMap, IntervalMap, Side, DOMAIN};
use crate::metric::TildeMap;
use crate::point::{chart_for, Pt, Span};
use crate::stats::linear_fit;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRecord {
    pub word: String,
    pub gap_lo: f64,
    pub gap_hi: f64,
    pub gap_ratio: f64,
    /// `(|I_{w0}| / |I_w|, |I_{w1}| / |I_w|)`.
    pub child_ratios: (f64, f64),
}

/// Gap record from a parent span and its two children, with every length
/// differenced in the chart of the parent's endpoints.
fn gap_record(word: &Word, parent: &Span, c0: &Span, c1: &Span) -> GapRecord {
    let chart = chart_for(&[parent.lo, parent.hi]);
    let len = |a: &Pt, b: &Pt| b.coord(chart) - a.coord(chart);
    let (left, right) = if len(&c0.lo, &c1.lo) >= 0.0 { (c0, c1) } else { (c1, c0) };
    let total = len(&parent.lo, &parent.hi);
    let gap = len(&left.hi, &right.lo).max(0.0);
    GapRecord {
        word: word.to_string(),
        gap_lo: left.hi.x + 0.0,
        gap_hi: right.lo.x + 0.0,
        gap_ratio: gap / total,
        child_ratios: (len(&c0.lo, &c0.hi) / total, len(&c1.lo, &c1.hi) / total),
    }
}

/// The gap between `I_{w0}` and `I_{w1}` inside `I_w`; the empty word gives
/// the leading gap.
pub fn gap<M: IntervalMap + ?Sized>(map: &M, word: &Word) -> Result<GapRecord> {
    let parent = cylinder_or_domain(map, word)?;
    let c0 = cylinder(map, &word.push_right(0)?)?;
    let c1 = cylinder(map, &word.push_right(1)?)?;
    Ok(gap_record(word, &parent.span, &c0.span, &c1.span))
}

/// Leading gap `|G|`.
pub fn leading_gap<M: IntervalMap + ?Sized>(map: &M) -> Result<f64> {
    let g = gap(map, &Word::empty())?;
    Ok(g.gap_ratio * 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSummary {
    pub depth: usize,
    pub min_gap_ratio: f64,
    pub max_gap_ratio: f64,
    pub min_child_ratio: f64,
    pub max_child_ratio: f64,
    pub records: Option<Vec<GapRecord>>,
}

/// Gap records for every word of length `≤ depth`, parents first.
pub fn gap_records(levels: &[Partition], depth: usize, whole: Span) -> Vec<GapRecord> {
    let mut out = Vec::new();
    let c = &levels[0];
    out.push(gap_record(&Word::empty(), &whole, &c.spans[0], &c.spans[1]));
    for len in 1..=depth {
        let parents = &levels[len - 1];
        let children = &levels[len];
        for p in parents.cylinders() {
            let code = p.word.code() << 1;
            out.push(gap_record(&p.word, &p.span, &children.spans[code as usize], &children.spans[code as usize + 1]));
        }
    }
    out
}

/// Aggregate gap geometry over all words of length `≤ depth`.
pub fn gap_geometry<M: IntervalMap + Sync + ?Sized>(map: &M, depth: usize, keep: bool) -> Result<GapSummary> {
    let levels = partition_levels(map, depth, DEFAULT_DEPTH_CAP)?;
    let records = gap_records(&levels, depth, Span::whole(map.domain()));
    let mut s = GapSummary {
        depth,
        min_gap_ratio: f64::INFINITY,
        max_gap_ratio: 0.0,
        min_child_ratio: f64::INFINITY,
        max_child_ratio: 0.0,
        records: None,
    };
    for r in &records {
        s.min_gap_ratio = s.min_gap_ratio.min(r.gap_ratio);
        s.max_gap_ratio = s.max_gap_ratio.max(r.gap_ratio);
        let (a, b) = r.child_ratios;
        s.min_child_ratio = s.min_child_ratio.min(a.min(b));
        s.max_child_ratio = s.max_child_ratio.max(a.max(b));
    }
    if keep {
        s.records = Some(records);
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapFitRow {
    pub eps: f64,
    pub leading_ratio: f64,
    pub min_gap_ratio: f64,
    pub max_gap_ratio: f64,
    pub min_child_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapFit {
    pub gamma: f64,
    /// Slope of `log(leading gap ratio)` against `log ε`.
    pub slope_leading: f64,
    pub slope_max: f64,
    pub slope_min: f64,
    /// `[min, max]` of `leading ratio / ε^{1/γ}` over the grid.
    pub band_leading: (f64, f64),
    /// `[min, max]` of every gap ratio over `ε^{1/γ}`, all words and all ε.
    pub band_all: (f64, f64),
    pub rows: Vec<GapFitRow>,
}

/// Log–log fits of gap ratios against `ε` over words of length `≤ depth`.
pub fn asymptotic_gap_fit<M, B>(build: B, gamma: f64, eps_grid: &[f64], depth: usize) -> Result<GapFit>
where
    M: IntervalMap + Sync,
    B: Fn(f64) -> Result<M> + Sync,
{
    use rayon::prelude::*;
    if eps_grid.len() < 2 || eps_grid.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Degenerate("gap fit needs at least two positive ε".into()));
    }
    let rows: Vec<GapFitRow> = eps_grid
        .par_iter()
        .map(|&eps| {
            let map = build(eps)?;
            let s = gap_geometry(&map, depth, false)?;
            Ok(GapFitRow {
                eps,
                leading_ratio: gap(&map, &Word::empty())?.gap_ratio,
                min_gap_ratio: s.min_gap_ratio,
                max_gap_ratio: s.max_gap_ratio,
                min_child_ratio: s.min_child_ratio,
            })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
    let slope = |f: &dyn Fn(&GapFitRow) -> f64| {
        let ys: Vec<f64> = rows.iter().map(|r| f(r).ln()).collect();
        linear_fit(&xs, &ys).map(|l| l.slope).unwrap_or(f64::NAN)
    };
    let scale = |r: &GapFitRow| r.eps.powf(1.0 / gamma);
    let band = |f: &dyn Fn(&GapFitRow) -> (f64, f64)| {
        rows.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
            let (a, b) = f(r);
            (lo.min(a / scale(r)), hi.max(b / scale(r)))
        })
    };
    Ok(GapFit {
        gamma,
        slope_leading: slope(&|r| r.leading_ratio),
        slope_max: slope(&|r| r.max_gap_ratio),
        slope_min: slope(&|r| r.min_gap_ratio),
        band_leading: band(&|r| (r.leading_ratio, r.leading_ratio)),
        band_all: band(&|r| (r.min_gap_ratio, r.max_gap_ratio)),
        rows,
    })
}

/// Empirical constants of the distortion bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodFamilyConstants {
    pub alpha: f64,
    pub c1: f64,
    pub k1: f64,
    pub c2: f64,
    pub k2: f64,
    pub c3: f64,
    pub k3: f64,
    pub big_c1: f64,
    /// `λ_n ≤ C₀ λ^n`.
    pub c0: f64,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub c2_sum: f64,
    pub c3_sum: f64,
    pub d: f64,
    pub e: f64,
    /// Some constant vanished, e.g. a piecewise-linear map with `K₁ = 0`.
    pub degenerate: bool,
}

/// `I_{00}` and `I_{10}` as `(lo, hi)` pairs: the left and right intervals.
/// The middle intervals are what lies between them on either side of `0`.
pub fn layout<M: IntervalMap + ?Sized>(map: &M) -> Result<((f64, f64), (f64, f64))> {
    let i00 = cylinder(map, &"00".parse()?)?;
    let i10 = cylinder(map, &"10".parse()?)?;
    Ok(((i00.lo(), i00.hi()), (i10.lo(), i10.hi())))
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Largest `|φ(x) - φ(y)| / |x - y|^α` over pairs of grid points.
fn holder_constant(xs: &[f64], vals: &[f64], alpha: f64) -> f64 {
    let mut k = 0.0f64;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let d = (xs[j] - xs[i]).abs();
            if d > 0.0 {
                k = k.max((vals[j] - vals[i]).abs() / d.powf(alpha));
            }
        }
    }
    k
}

/// Estimates the distortion constants by sampling `samples` points on each
/// of the left, right and middle intervals.
pub fn estimate_constants(map: &FamilyMap, samples: usize) -> Result<GoodFamilyConstants> {
    let n = samples.max(8);
    let fam = &map.family;
    let gamma = fam.gamma;
    let alpha = fam.alpha();
    let (left, right) = layout(map)?;
    let (a, d) = (left.1, right.0);
    if !(a < 0.0 && d > 0.0 && left.0 < a && d < right.1) {
        return Err(Error::Degenerate(format!("collapsed layout {left:?} {right:?}")));
    }
    let big_c1 = (left.1 - left.0).min(right.1 - right.0);

    let mut c1 = f64::INFINITY;
    let mut k1 = 0.0f64;
    for (lo, hi) in [left, right] {
        let xs = grid(lo, hi, n);
        let ds: Vec<f64> = xs.iter().map(|&x| map.deriv_at(x)).collect();
        c1 = c1.min(ds.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())));
        k1 = k1.max(holder_constant(&xs, &ds, fam.alpha_prime));
    }

    let (mut c2, mut k2, mut c3, mut k3) = (f64::INFINITY, 0.0f64, f64::INFINITY, 0.0f64);
    if fam.kind != FamilyKind::Tent {
        let tilde = TildeMap::new(map)?;
        let metric = &tilde.metric;
        for (lo, hi, side) in [(a, 0.0, Side::Left), (0.0, d, Side::Right)] {
            let xs = grid(lo, hi, n);
            let hp: Vec<f64> = xs.iter().map(|&x| metric.h_deriv_pt(Pt::from_x(x, DOMAIN))).collect();
            c3 = c3.min(hp.iter().fold(f64::INFINITY, |m, &v| m.min(v)));
            k3 = k3.max(holder_constant(&xs, &hp, 1.0));
            let ys: Vec<f64> = xs.iter().map(|&x| metric.h_pt(Pt::from_x(x, DOMAIN)).x).collect();
            let td: Vec<f64> = ys
                .iter()
                .map(|&y| tilde.deriv(y, if y == 0.0 { Some(side) } else { None }))
                .collect::<Result<_>>()?;
            c2 = c2.min(td.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())));
            k2 = k2.max(holder_constant(&ys, &td, fam.alpha_double_prime));
        }
    } else {
        // tent: identity metric, f̃ = f
        c2 = 2.0 + map.eps;
        c3 = 1.0;
    }

    let decay = crate::branches::decay_rate(map, 12)?;
    let lambda = decay.lambda_fit;
    let c0 = decay
        .lambdas
        .iter()
        .enumerate()
        .map(|(k, l)| l / lambda.powi(k as i32))
        .fold(0.0, f64::max);

    let p = (gamma - 1.0) / gamma;
    let big_a = k1 / c1 + k3.powf(alpha) * k2 / c2 + k3 / c3 + p;
    let big_b = p / big_c1;
    let big_c = p;
    let c2_sum = 2.0 * c0 / (1.0 - lambda);
    let c3_sum = 2f64.powf(alpha) * c0 / (1.0 - lambda.powf(alpha));
    Ok(GoodFamilyConstants {
        alpha,
        c1,
        k1,
        c2,
        k2,
        c3,
        k3,
        big_c1,
        c0,
        lambda,
        a: big_a,
        b: big_b,
        c: big_c,
        c2_sum,
        c3_sum,
        d: (big_a + big_b * c2_sum) * c3_sum,
        e: big_c * c3_sum,
        degenerate: k1 == 0.0 || fam.kind == FamilyKind::Tent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistortionCheck {
    pub lhs: f64,
    pub rhs_lemma: f64,
    pub rhs_corollary: f64,
    pub d_xy: f64,
    pub pass_lemma: bool,
    pub pass_corollary: bool,
}

impl DistortionCheck {
    pub fn pass(&self) -> bool {
        self.pass_lemma && self.pass_corollary
    }
}

const DISTORTION_SLACK: f64 = 1e-9;

/// Distortion of `g_w` at `x` and `y` against both bounds. The backward
/// images `J_i` of `J_0 = [x, y]` are taken along `w`, innermost bit first.
pub fn distortion_check<M: IntervalMap + ?Sized>(
    map: &M,
    consts: &GoodFamilyConstants,
    word: &Word,
    x: f64,
    y: f64,
) -> Result<DistortionCheck> {
    let dom = map.domain();
    let (mut xi, mut yi) = (Pt::from_x(x, dom), Pt::from_x(y, dom));
    let j0 = xi.dist(&yi);
    let d_xy = [x + 1.0, 1.0 - x, y + 1.0, 1.0 - y].into_iter().fold(f64::INFINITY, f64::min);
    let (mut log_lhs, mut sum, mut sum_alpha) = (0.0, 0.0, 0.0);
    for bit in word.bits().rev() {
        xi = map.inverse_branch_pt(bit, xi)?;
        yi = map.inverse_branch_pt(bit, yi)?;
        log_lhs += (map.deriv_at(yi.x).abs() / map.deriv_at(xi.x).abs()).ln();
        let ji = xi.dist(&yi);
        sum += ji;
        sum_alpha += ji.powf(consts.alpha);
    }
    let k = consts;
    let lemma_exp = (k.a + k.b * sum + k.c * j0 / d_xy) * sum_alpha;
    let cor_exp = (k.d + k.e / d_xy) * j0.powf(k.alpha);
    let lhs = log_lhs.exp();
    let rhs_lemma = lemma_exp.exp();
    let rhs_corollary = cor_exp.exp();
    Ok(DistortionCheck {
        lhs,
        rhs_lemma,
        rhs_corollary,
        d_xy,
        pass_lemma: lhs <= rhs_lemma * (1.0 + DISTORTION_SLACK),
        pass_corollary: lhs <= rhs_corollary * (1.0 + DISTORTION_SLACK),
    })
}

/// Pairs closer than this to `±1` are skipped by the sampler.
pub const MIN_D_XY: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionSuite {
    pub samples: usize,
    pub pass_lemma: usize,
    pub pass_corollary: usize,
    /// Samples where the Lemma bound exceeded the Corollary bound.
    pub lemma_above_corollary: usize,
    pub worst_lemma_margin: f64,
    pub worst_corollary_margin: f64,
}

/// Random triples `(w, x, y)` with `|w| ≤ max_len` and `x, y` in a common
/// interval of `η₁` at distance at least [`MIN_D_XY`] from `±1`.
pub fn distortion_suite<M: IntervalMap + Sync + ?Sized, R: Rng>(
    map: &M,
    consts: &GoodFamilyConstants,
    samples: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<DistortionSuite> {
    let dom = map.domain();
    let level1 = crate::branches::partition(map, 1)?;
    let mut triples = Vec::with_capacity(samples);
    while triples.len() < samples {
        let span = level1.spans[rng.random_range(0..4)];
        let (lo, hi) = (span.lo.x, span.hi.x);
        let x = rng.random_range(lo..=hi);
        let y = rng.random_range(lo..=hi);
        let d = [x - dom.0, dom.1 - x, y - dom.0, dom.1 - y].into_iter().fold(f64::INFINITY, f64::min);
        if d < MIN_D_XY {
            continue;
        }
        let len = rng.random_range(1..=max_len);
        let word = Word::from_code(rng.random_range(0..(1u64 << len)), len)?;
        triples.push((word, x, y));
    }
    use rayon::prelude::*;
    let checks: Vec<DistortionCheck> = triples
        .par_iter()
        .map(|(w, x, y)| distortion_check(map, consts, w, *x, *y))
        .collect::<Result<_>>()?;
    let mut out = DistortionSuite {
        samples,
        pass_lemma: 0,
        pass_corollary: 0,
        lemma_above_corollary: 0,
        worst_lemma_margin: f64::INFINITY,
        worst_corollary_margin: f64::INFINITY,
    };
    for c in &checks {
        out.pass_lemma += c.pass_lemma as usize;
        out.pass_corollary += c.pass_corollary as usize;
        out.lemma_above_corollary += (c.rhs_lemma > c.rhs_corollary * (1.0 + DISTORTION_SLACK)) as usize;
        out.worst_lemma_margin = out.worst_lemma_margin.min(c.rhs_lemma.ln() - c.lhs.ln());
        out.worst_corollary_margin = out.worst_corollary_margin.min(c.rhs_corollary.ln() - c.lhs.ln());
    }
    Ok(out)
}

/// Leading gap in closed form for the power family, `2(ε/(2+ε))^{1/γ}`.
pub fn leading_gap_closed_form(gamma: f64, eps: f64) -> f64 {
    2.0 * (eps / (2.0 + eps)).powf(1.0 / gamma)
}

/// Cylinders of each child of `I_w` for a single word, exposed for callers
/// that already hold the parent span.
pub fn children_of<M: IntervalMap + ?Sized>(map: &M, word: &Word) -> Result<(Span, Span)> {
    let c0 = pull_back_word_child(map, word, 0)?;
    let c1 = pull_back_word_child(map, word, 1)?;
    Ok((c0, c1))
}

fn pull_back_word_child<M: IntervalMap + ?Sized>(map: &M, word: &Word, bit: u8) -> Result<Span> {
    let mut s = pull_back(map, bit, &Span::whole(map.domain()))?;
    for b in word.bits().rev() {
        s = pull_back(map, b, &s)?;
    }
    Ok(s)
}
