//! The scaling function `s(w i) = |I_{wi}| / |I_w|` along dual points, its
//! graph, convergence in the parameter, Hölder fits, jumps at eventually-zero
//! points, recovery of the critical exponent and the asymmetry invariant.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::branches::{partition_levels, pull_back, Partition, Word, DEFAULT_DEPTH_CAP};
use crate::error::{Error, Result};
use crate::family::IntervalMap;
use crate::point::Span;
use crate::stats::linear_fit;
use crate::symbolic::{Class, DualPoint, Tail};

/// Deltas below this are roundoff and never count as divergence.
const NOISE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingEstimate {
    pub dual_point: String,
    pub depth: usize,
    /// `s(w_n i)` for `n = 1..=depth`.
    pub approximants: Vec<f64>,
    pub value: f64,
    pub error_bound: f64,
    pub non_convergent: bool,
}

impl ScalingEstimate {
    fn from_sequence(dual_point: String, approximants: Vec<f64>) -> Self {
        let depth = approximants.len();
        let value = *approximants.last().expect("depth >= 1");
        let deltas: Vec<f64> = approximants.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let last = &deltas[deltas.len().saturating_sub(3)..];
        let error_bound = last.iter().copied().fold(0.0, f64::max);
        let non_convergent = last.len() == 3
            && last.windows(2).all(|w| w[1] >= w[0])
            && last[2] > NOISE_FLOOR;
        ScalingEstimate { dual_point, depth, approximants, value, error_bound, non_convergent }
    }
}

/// Scaling approximants along `a`, measuring intervals with `measure`.
///
/// Starting from `J = I_{i₀}` inside `K = [-1, 1]`, both intervals are pulled
/// back through `g_{i₁}, g_{i₂}, …`; after `n` steps `J = I_{w_n i}` and
/// `K = I_{w_n}`.
pub fn scale_with<M, F>(map: &M, a: &DualPoint, depth: usize, measure: F) -> Result<ScalingEstimate>
where
    M: IntervalMap + ?Sized,
    F: Fn(&Span) -> f64,
{
    if depth == 0 {
        return Err(Error::Degenerate("scaling estimates need depth >= 1".into()));
    }
    if depth + 1 > crate::branches::MAX_WORD_LEN {
        return Err(Error::BudgetExceeded { depth, cap: crate::branches::MAX_WORD_LEN - 1 });
    }
    let mut k = Span::whole(map.domain());
    let mut j = pull_back(map, a.coord(0)?, &k)?;
    let mut seq = Vec::with_capacity(depth);
    for n in 1..=depth {
        let bit = a.coord(n)?;
        j = pull_back(map, bit, &j)?;
        k = pull_back(map, bit, &k)?;
        seq.push(measure(&j) / measure(&k));
    }
    Ok(ScalingEstimate::from_sequence(a.to_string(), seq))
}

/// An interval together with its length, kept accurate after the endpoints
/// stop resolving it.
#[derive(Debug, Clone, Copy)]
struct Tracked {
    span: Span,
    len: f64,
}

/// Endpoint differences are trusted down to this relative rounding error.
const TRUSTED_ROUNDOFF: f64 = 1e-12;

impl Tracked {
    fn whole(domain: (f64, f64)) -> Self {
        let span = Span::whole(domain);
        Tracked { span, len: span.length() }
    }

    /// Pull-back through `g_bit`. Once the endpoints no longer resolve the
    /// interval, the length is carried by Simpson's rule on `|g'| = 1/|f'∘g|`.
    fn pull_back<M: IntervalMap + ?Sized>(&self, map: &M, bit: u8) -> Result<Self> {
        let span = pull_back(map, bit, &self.span)?;
        let diff = span.length();
        if span.length_roundoff() <= TRUSTED_ROUNDOFF * diff {
            return Ok(Tracked { span, len: diff });
        }
        let mid = map.inverse_branch_pt(bit, self.span.midpoint(map.domain()))?;
        let inv = |x: f64| 1.0 / map.deriv_at(x).abs();
        let avg = (inv(span.lo.x) + 4.0 * inv(mid.x) + inv(span.hi.x)) / 6.0;
        Ok(Tracked { span, len: self.len * avg })
    }
}

/// `s(a*)` estimated from the approximants up to `depth`.
pub fn scale_at<M: IntervalMap + ?Sized>(map: &M, a: &DualPoint, depth: usize) -> Result<ScalingEstimate> {
    if depth == 0 {
        return Err(Error::Degenerate("scaling estimates need depth >= 1".into()));
    }
    if depth + 1 > crate::branches::MAX_WORD_LEN {
        return Err(Error::BudgetExceeded { depth, cap: crate::branches::MAX_WORD_LEN - 1 });
    }
    let mut k = Tracked::whole(map.domain());
    let mut j = k.pull_back(map, a.coord(0)?)?;
    let mut seq = Vec::with_capacity(depth);
    for n in 1..=depth {
        let bit = a.coord(n)?;
        j = j.pull_back(map, bit)?;
        k = k.pull_back(map, bit)?;
        seq.push(j.len / k.len);
    }
    Ok(ScalingEstimate::from_sequence(a.to_string(), seq))
}

/// `s(w)` for a single word of length at least 2.
pub fn word_ratio<M: IntervalMap + ?Sized>(map: &M, word: &Word) -> Result<f64> {
    let parent = word.parent().filter(|p| !p.is_empty()).ok_or_else(|| {
        Error::InvalidWord(format!("scaling ratio needs a parent cylinder, got `{word}`"))
    })?;
    let child = crate::branches::cylinder(map, word)?;
    let parent = crate::branches::cylinder(map, &parent)?;
    Ok(child.length() / parent.length())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphRow {
    pub x_coord: f64,
    pub word: String,
    pub s: f64,
}

/// Abscissa `Σ i_k 2^{-(k+1)}` of the word `i_n … i₀`.
pub fn x_coord(word: &Word) -> f64 {
    let len = word.len();
    let rev = word.code().reverse_bits() >> (64 - len);
    rev as f64 / (len as f64).exp2()
}

/// Rows of the graph of `s` over all words of length `depth + 1`, from
/// precomputed partitions `η_{depth-1}` and `η_depth`.
pub fn graph_rows(parent: &Partition, child: &Partition) -> Vec<GraphRow> {
    let mut rows: Vec<GraphRow> = child
        .cylinders()
        .map(|c| {
            let p = parent.spans[(c.word.code() >> 1) as usize];
            GraphRow { x_coord: x_coord(&c.word), word: c.word.to_string(), s: c.length() / p.length() }
        })
        .collect();
    rows.sort_by(|a, b| a.x_coord.total_cmp(&b.x_coord));
    rows
}

/// Graph of the scaling function over all words of length `depth + 1`,
/// sorted by abscissa.
pub fn scaling_graph<M: IntervalMap + Sync + ?Sized>(map: &M, depth: usize) -> Result<Vec<GraphRow>> {
    if depth == 0 {
        return Err(Error::Degenerate("scaling graph needs depth >= 1".into()));
    }
    let levels = partition_levels(map, depth, DEFAULT_DEPTH_CAP)?;
    Ok(graph_rows(&levels[depth - 1], &levels[depth]))
}

/// Scaling values on a parameter grid and their sup-distances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub eps: Vec<f64>,
    /// `values[i][k] = s_{ε_i}(a*_k)`.
    pub values: Vec<Vec<f64>>,
    /// `distances[i][j] = max_k |s_{ε_i}(a*_k) - s_{ε_j}(a*_k)|`.
    pub distances: Vec<Vec<f64>>,
}

/// Sup-norm distances between scaling functions at different parameters,
/// sampled on `samples`.
pub fn scaling_convergence<M, B>(
    build: B,
    eps_grid: &[f64],
    samples: &[DualPoint],
    depth: usize,
) -> Result<ConvergenceTable>
where
    M: IntervalMap + Sync,
    B: Fn(f64) -> Result<M> + Sync,
{
    let values: Vec<Vec<f64>> = eps_grid
        .par_iter()
        .map(|&e| {
            let map = build(e)?;
            samples.iter().map(|a| Ok(scale_at(&map, a, depth)?.value)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let distances = values
        .iter()
        .map(|vi| {
            values
                .iter()
                .map(|vj| vi.iter().zip(vj).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
                .collect()
        })
        .collect();
    Ok(ConvergenceTable { eps: eps_grid.to_vec(), values, distances })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderFit {
    pub c: f64,
    pub lambda: f64,
    /// Root-mean-square residual of the fit in `log |Δs|`.
    pub residual: f64,
    /// No sampled difference rose above the truncation noise of the
    /// approximants: the scaling function is constant on the samples.
    pub degenerate: bool,
    /// Largest error bound among the sampled estimates.
    pub noise: f64,
    /// `(n, max |Δs|)` envelope used in the fit.
    pub envelope: Vec<(usize, f64)>,
}

/// Envelope entries at or below this are rounding noise.
const HOLDER_ROUNDOFF: f64 = 1e-10;

/// Longest run of zeros allowed in sampled coordinates when pairs are kept
/// away from the eventually-zero points.
const B_SAMPLE_MAX_ZERO_RUN: usize = 3;

fn random_coords<R: Rng>(rng: &mut R, len: usize, avoid_a: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    let mut run = 0;
    for _ in 0..len {
        let b = if avoid_a && run >= B_SAMPLE_MAX_ZERO_RUN { 1 } else { rng.random_range(0..2u8) };
        run = if b == 0 { run + 1 } else { 0 };
        out.push(b);
    }
    out
}

/// Fits `|s(a*) - s(b*)| ≤ C λ^n` over pairs agreeing in their first `n`
/// coordinates, `n = 2..=depth-2`, using the per-`n` maximum. With `avoid_a`
/// the samples have bounded zero runs, which keeps them uniformly away from
/// the eventually-zero points. Entries within twice the largest error bound
/// of the estimates are truncation noise and left out of the fit.
pub fn holder_fit<M: IntervalMap + ?Sized, R: Rng>(
    map: &M,
    n_pairs: usize,
    depth: usize,
    avoid_a: bool,
    rng: &mut R,
) -> Result<HolderFit> {
    if depth < 6 {
        return Err(Error::Degenerate(format!("Hölder fit needs depth >= 6, got {depth}")));
    }
    let mut envelope = Vec::new();
    let mut noise = 0.0f64;
    for n in 2..=depth - 2 {
        let mut worst = 0.0f64;
        for _ in 0..n_pairs {
            let a = random_coords(rng, depth + 1, avoid_a);
            let mut b = a.clone();
            let tail = random_coords(rng, depth + 1 - n, avoid_a);
            b[n..].copy_from_slice(&tail);
            if avoid_a {
                // re-impose the run bound across the splice
                let mut run = b[..n].iter().rev().take_while(|&&x| x == 0).count();
                for x in b[n..].iter_mut() {
                    if run >= B_SAMPLE_MAX_ZERO_RUN {
                        *x = 1;
                    }
                    run = if *x == 0 { run + 1 } else { 0 };
                }
            }
            let sa = scale_at(map, &DualPoint::new(a, Tail::Truncated)?, depth)?;
            let sb = scale_at(map, &DualPoint::new(b, Tail::Truncated)?, depth)?;
            noise = noise.max(sa.error_bound).max(sb.error_bound);
            worst = worst.max((sa.value - sb.value).abs());
        }
        envelope.push((n, worst));
    }
    let floor = (2.0 * noise).max(HOLDER_ROUNDOFF);
    let live: Vec<&(usize, f64)> = envelope.iter().filter(|(_, d)| *d > floor).collect();
    if live.len() < 3 {
        return Ok(HolderFit { c: 0.0, lambda: 0.0, residual: 0.0, degenerate: true, noise, envelope });
    }
    let xs: Vec<f64> = live.iter().map(|(n, _)| *n as f64).collect();
    let ys: Vec<f64> = live.iter().map(|(_, d)| d.ln()).collect();
    let fit = linear_fit(&xs, &ys).expect("distinct abscissae");
    Ok(HolderFit {
        c: fit.intercept.exp(),
        lambda: fit.slope.exp(),
        residual: fit.rms_residual,
        degenerate: false,
        noise,
        envelope,
    })
}

/// Sequences and limits at an eventually-zero dual point `(0_∞ w i.)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpAnalysis {
    pub dual_point: String,
    pub gamma: f64,
    /// `|I_{0_n w i}|`.
    pub a_n: Vec<f64>,
    /// `|I_{0_n w}|`.
    pub b_n: Vec<f64>,
    /// Distance from `I_{0_n w}` to `-1`.
    pub c_n: Vec<f64>,
    /// `lim b_n / c_n`; undefined when `I_{0_n w}` touches `-1`.
    pub tau1: Option<f64>,
    /// `lim a_n / c_n`.
    pub tau2: Option<f64>,
    /// Limits of `s(j 1 0_n w i)` for the child of `I_{0_n w}` next to `-1`
    /// and for the other child.
    pub one_sided_limits: (f64, f64),
    /// `i` labels the child next to `-1`.
    pub near_child: bool,
    /// The value `s₀(a*) = lim a_n / b_n`.
    pub s0: f64,
    /// The limit of `s₀(b*)` as `b*` tends to `a*` from outside the class.
    pub b_side_limit: f64,
    pub jump: f64,
    /// Largest spread of the last five terms over all limit sequences.
    pub cauchy_spread: f64,
    pub non_convergent: bool,
}

const JUMP_CAUCHY_WINDOW: usize = 5;
const JUMP_CAUCHY_TOL: f64 = 1e-6;

fn spread(seq: &[f64]) -> f64 {
    let tail = &seq[seq.len().saturating_sub(JUMP_CAUCHY_WINDOW)..];
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Jump analysis at `a* = (0_∞ w i.)` for a map on the boundary of
/// hyperbolicity with critical exponent `gamma`, following `I_{0_n w}` for
/// `n = 0..=depth`.
pub fn jump_at<M: IntervalMap + ?Sized>(map: &M, gamma: f64, a: &DualPoint, depth: usize) -> Result<JumpAnalysis> {
    if a.class() != Class::A {
        return Err(Error::NotInA(a.to_string()));
    }
    if depth < JUMP_CAUCHY_WINDOW {
        return Err(Error::Degenerate(format!("jump analysis needs depth >= {JUMP_CAUCHY_WINDOW}")));
    }
    let i = a.coord(0)?;
    let w = a.suffix().get(1..).unwrap_or(&[]);
    // I_w (the whole domain for empty w) and its children I_{w i}, I_{w i'};
    // prepending zeros then gives I_{0_n w}, I_{0_n w i}, I_{0_n w i'}
    let whole = Span::whole(map.domain());
    let mut k = whole;
    let mut own = pull_back(map, i, &whole)?;
    let mut other = pull_back(map, 1 - i, &whole)?;
    for &bit in w {
        k = pull_back(map, bit, &k)?;
        own = pull_back(map, bit, &own)?;
        other = pull_back(map, bit, &other)?;
    }
    let mut seqs = JumpSeqs::default();
    let exp = 1.0 / gamma;
    let mut near_child = None;
    for n in 0..=depth {
        if n > 0 {
            k = pull_back(map, 0, &k)?;
            own = pull_back(map, 0, &own)?;
            other = pull_back(map, 0, &other)?;
        }
        let own_is_near = own.lo.lo <= other.lo.lo;
        near_child.get_or_insert(own_is_near);
        let near = if own_is_near { own } else { other };
        let (a_len, b_len, c) = (own.length(), k.length(), k.lo.lo);
        let a_near = near.length();
        let d = (b_len + c).powf(exp) - c.powf(exp);
        let s1 = ((a_near + c).powf(exp) - c.powf(exp)) / d;
        let s2 = ((b_len + c).powf(exp) - (a_near + c).powf(exp)) / d;
        seqs.push(a_len, b_len, c, s1, s2);
    }
    let near_child = near_child.expect("depth >= 0");
    let s0 = seqs.ratio.last().copied().expect("nonempty");
    let one_sided = (*seqs.s1.last().unwrap(), *seqs.s2.last().unwrap());
    let b_side = if near_child { one_sided.0 } else { one_sided.1 };
    let touches = seqs.c.iter().rev().take(JUMP_CAUCHY_WINDOW).any(|&c| c == 0.0);
    let (tau1, tau2, tau_spread) = if touches {
        (None, None, 0.0)
    } else {
        let t1: Vec<f64> = seqs.b.iter().zip(&seqs.c).map(|(b, c)| b / c).collect();
        let t2: Vec<f64> = seqs.a.iter().zip(&seqs.c).map(|(a, c)| a / c).collect();
        let sp = (spread(&t1) / t1.last().unwrap()).max(spread(&t2) / t2.last().unwrap());
        (t1.last().copied(), t2.last().copied(), sp)
    };
    let cauchy_spread = spread(&seqs.ratio).max(spread(&seqs.s1)).max(spread(&seqs.s2)).max(tau_spread);
    Ok(JumpAnalysis {
        dual_point: a.to_string(),
        gamma,
        a_n: seqs.a,
        b_n: seqs.b,
        c_n: seqs.c,
        tau1,
        tau2,
        one_sided_limits: one_sided,
        near_child,
        s0,
        b_side_limit: b_side,
        jump: b_side - s0,
        cauchy_spread,
        non_convergent: cauchy_spread > JUMP_CAUCHY_TOL,
    })
}

#[derive(Default)]
struct JumpSeqs {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    ratio: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl JumpSeqs {
    fn push(&mut self, a: f64, b: f64, c: f64, s1: f64, s2: f64) {
        self.a.push(a);
        self.b.push(b);
        self.c.push(c);
        self.ratio.push(a / b);
        self.s1.push(s1);
        self.s2.push(s2);
    }
}

/// `s(j 1 0_n w i)` computed directly from cylinders, for cross-checking the
/// one-sided limits.
pub fn direct_b_side<M: IntervalMap + ?Sized>(map: &M, a: &DualPoint, n: usize, j: &Word) -> Result<f64> {
    if a.class() != Class::A {
        return Err(Error::NotInA(a.to_string()));
    }
    let head = a.approximant(a.suffix().len().max(1) - 1)?;
    let zeros = Word::from_code(0, n)?;
    let word = j.push_right(1)?.concat(&zeros)?.concat(&head)?;
    word_ratio(map, &word)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaRecovery {
    pub gamma: f64,
    /// `s((0_∞.))`.
    pub s_a: f64,
    /// `s` at a point of the other class next to `(0_∞.)`.
    pub s_b: f64,
    /// Uniform scaling: the two values coincide and the quotient is `0/0`-like.
    pub degenerate: bool,
}

/// Number of leading one-coordinates in the probe point used for the
/// far-from-zero side of `(0_∞.)`.
const GAMMA_PROBE_LEAD: usize = 8;

/// Critical exponent from `log s((0_∞.)) / log s(b*)` with `b*` the point
/// `(…111 0_m.)`, `m = depth - 8`, which approaches `(0_∞.)` from outside the
/// eventually-zero class.
pub fn gamma_recover<M: IntervalMap + ?Sized>(map: &M, depth: usize) -> Result<GammaRecovery> {
    if depth <= GAMMA_PROBE_LEAD + 2 {
        return Err(Error::Degenerate(format!("γ recovery needs depth > {}", GAMMA_PROBE_LEAD + 2)));
    }
    let a = DualPoint::new(Vec::new(), Tail::AllZeros)?;
    let b = DualPoint::new(vec![0; depth - GAMMA_PROBE_LEAD], Tail::Periodic(vec![1]))?;
    let sa = scale_at(map, &a, depth)?;
    let sb = scale_at(map, &b, depth)?;
    if sa.non_convergent {
        return Err(Error::NonConvergence(format!("s at {a} did not settle by depth {depth}")));
    }
    let degenerate = (sa.value - sb.value).abs() < 1e-9;
    Ok(GammaRecovery { gamma: sa.value.ln() / sb.value.ln(), s_a: sa.value, s_b: sb.value, degenerate })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymmetryEstimate {
    pub value: f64,
    /// `|I_{010_n}| / |I_{110_n}|` for `n = 0..=depth`.
    pub sequence: Vec<f64>,
    pub cauchy_spread: f64,
    pub non_convergent: bool,
}

/// `lim |I_{010_n}| / |I_{110_n}|`.
pub fn asymmetry<M: IntervalMap + ?Sized>(map: &M, depth: usize) -> Result<AsymmetryEstimate> {
    if depth < JUMP_CAUCHY_WINDOW {
        return Err(Error::Degenerate(format!("asymmetry needs depth >= {JUMP_CAUCHY_WINDOW}")));
    }
    let mut z = Span::whole(map.domain());
    let mut sequence = Vec::with_capacity(depth + 1);
    for n in 0..=depth {
        if n > 0 {
            z = pull_back(map, 0, &z)?;
        }
        let one = pull_back(map, 1, &z)?;
        let left = pull_back(map, 0, &one)?;
        let right = pull_back(map, 1, &one)?;
        sequence.push(left.length() / right.length());
    }
    let value = *sequence.last().unwrap();
    let cauchy_spread = spread(&sequence) / value;
    Ok(AsymmetryEstimate { value, sequence, cauchy_spread, non_convergent: cauchy_spread > JUMP_CAUCHY_TOL })
}
