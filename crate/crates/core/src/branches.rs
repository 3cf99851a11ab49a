//! Inverse branches, cylinders `I_w` and the nested partitions they form.
//!
//! Words are read leftmost-first and the leftmost bit is the outermost
//! branch: `g_w = g_{j0} ∘ g_{j1} ∘ … ∘ g_{jm}`. Appending a bit on the right
//! refines a cylinder; prepending a bit on the left moves one level up the
//! partition tree.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::IntervalMap;
use crate::point::{Pt, Span};
use crate::roots::{safeguarded_newton, RootOptions};
use crate::stats::linear_fit;

/// Longest representable word.
pub const MAX_WORD_LEN: usize = 64;
/// Default cap on partition depth.
pub const DEFAULT_DEPTH_CAP: usize = 22;

/// A finite binary word, leftmost bit most significant in `code`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    len: u8,
    code: u64,
}

impl Word {
    pub const fn empty() -> Self {
        Word { len: 0, code: 0 }
    }

    /// Word of length `len` whose bits, leftmost first, are the binary digits
    /// of `code`.
    pub fn from_code(code: u64, len: usize) -> Result<Self> {
        if len > MAX_WORD_LEN || (len < 64 && code >> len != 0) {
            return Err(Error::InvalidWord(format!("code {code} does not fit {len} bits")));
        }
        Ok(Word { len: len as u8, code })
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut w = Word::empty();
        for &b in bits {
            w = w.push_right(b)?;
        }
        Ok(w)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn code(&self) -> u64 {
        self.code
    }

    /// Bit `k`, counted from the left.
    pub fn bit(&self, k: usize) -> u8 {
        debug_assert!(k < self.len());
        ((self.code >> (self.len() - 1 - k)) & 1) as u8
    }

    pub fn bits(&self) -> impl DoubleEndedIterator<Item = u8> + '_ {
        (0..self.len()).map(move |k| self.bit(k))
    }

    pub fn push_right(&self, b: u8) -> Result<Self> {
        check_bit(b)?;
        if self.len() == MAX_WORD_LEN {
            return Err(Error::InvalidWord("word longer than 64 bits".into()));
        }
        Ok(Word { len: self.len + 1, code: (self.code << 1) | b as u64 })
    }

    pub fn push_left(&self, b: u8) -> Result<Self> {
        check_bit(b)?;
        if self.len() == MAX_WORD_LEN {
            return Err(Error::InvalidWord("word longer than 64 bits".into()));
        }
        Ok(Word { len: self.len + 1, code: self.code | ((b as u64) << self.len) })
    }

    /// Concatenation `self · other`.
    pub fn concat(&self, other: &Word) -> Result<Self> {
        if self.len() + other.len() > MAX_WORD_LEN {
            return Err(Error::InvalidWord("word longer than 64 bits".into()));
        }
        let code = if other.len() == 64 { other.code } else { (self.code << other.len) | other.code };
        Ok(Word { len: self.len + other.len, code })
    }

    /// The word with its rightmost bit removed.
    pub fn parent(&self) -> Option<Self> {
        if self.is_empty() {
            None
        } else {
            Some(Word { len: self.len - 1, code: self.code >> 1 })
        }
    }

    pub fn ones(&self) -> u32 {
        self.code.count_ones()
    }

    /// Sign of `g_w'`: `-1` iff the word has an odd number of 1-bits.
    pub fn orientation(&self) -> i8 {
        if self.ones() % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

fn check_bit(b: u8) -> Result<()> {
    if b > 1 {
        return Err(Error::InvalidBit(b));
    }
    Ok(())
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut w = Word::empty();
        for ch in s.chars() {
            let b = match ch {
                '0' => 0,
                '1' => 1,
                _ => return Err(Error::InvalidWord(s.to_string())),
            };
            w = w.push_right(b)?;
        }
        Ok(w)
    }
}

/// A labelled cylinder `I_w` with the orientation of `g_w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cylinder {
    pub word: Word,
    pub span: Span,
    pub orientation: i8,
}

impl Cylinder {
    pub fn lo(&self) -> f64 {
        self.span.lo.x
    }

    pub fn hi(&self) -> f64 {
        self.span.hi.x
    }

    pub fn length(&self) -> f64 {
        self.span.length()
    }
}

/// Generic preimage of `y` under the branch on `side` of a map with critical
/// point `0`. The root is localized to the outer or inner half of the branch
/// first; the outer half is solved in the endpoint-offset variable so that
/// preimages of points near `-1` keep full relative accuracy.
pub fn solve_branch<M: IntervalMap + ?Sized>(map: &M, side: u8, y: Pt) -> Result<Pt> {
    check_bit(side)?;
    let dom = map.domain();
    let opts = RootOptions { xtol_abs: 1e-300, ..RootOptions::default() };
    let outer = if side == 0 { dom.0 } else { dom.1 };
    let mid = 0.5 * outer;
    let f_mid = map.eval_pt(Pt::from_x(mid, dom));
    let below = y.diff(&f_mid) < 0.0;
    if below {
        // outer half, solve for the offset from the endpoint
        let width = (mid - outer).abs();
        let to_pt = |t: f64| if side == 0 { Pt::from_lo(t, dom) } else { Pt::from_hi(t, dom) };
        let dxdt = if side == 0 { 1.0 } else { -1.0 };
        let t = safeguarded_newton(
            |t| {
                let p = to_pt(t);
                (map.eval_pt(p).diff(&y), map.deriv_at(p.x) * dxdt)
            },
            0.0,
            width,
            opts,
        )?;
        Ok(to_pt(t))
    } else {
        let (a, b) = if side == 0 { (mid, 0.0) } else { (0.0, mid) };
        let x = safeguarded_newton(
            |x| {
                let p = Pt::from_x(x, dom);
                (map.eval_pt(p).diff(&y), map.deriv_at(x))
            },
            a,
            b,
            opts,
        )?;
        let x = if side == 0 { -x.abs() } else { x.abs() };
        Ok(Pt::from_x(x, dom))
    }
}

/// `g_side(y)` for `y` in the normalized domain.
pub fn inverse_branch<M: IntervalMap + ?Sized>(map: &M, side: u8, y: f64) -> Result<f64> {
    check_bit(side)?;
    let dom = map.domain();
    if !(dom.0..=dom.1).contains(&y) {
        return Err(Error::OutOfDomain { x: y });
    }
    Ok(map.inverse_branch_pt(side, Pt::from_x(y, dom))?.x)
}

/// Image of a span under `g_side`.
#[inline]
pub fn pull_back<M: IntervalMap + ?Sized>(map: &M, side: u8, span: &Span) -> Result<Span> {
    let a = map.inverse_branch_pt(side, span.lo)?;
    let b = map.inverse_branch_pt(side, span.hi)?;
    Ok(Span::new(a, b))
}

/// Image of `span` under `g_w`, innermost bit first.
pub fn pull_back_word<M: IntervalMap + ?Sized>(map: &M, word: &Word, span: Span) -> Result<Span> {
    let mut s = span;
    for b in word.bits().rev() {
        s = pull_back(map, b, &s)?;
    }
    Ok(s)
}

/// The cylinder `I_w = g_w([-1, 1])`.
pub fn cylinder<M: IntervalMap + ?Sized>(map: &M, word: &Word) -> Result<Cylinder> {
    if word.is_empty() {
        return Err(Error::InvalidWord("cylinders need a nonempty word".into()));
    }
    Ok(cylinder_or_domain(map, word)?)
}

/// Like [`cylinder`], with the empty word labelling the whole domain.
pub(crate) fn cylinder_or_domain<M: IntervalMap + ?Sized>(map: &M, word: &Word) -> Result<Cylinder> {
    let span = pull_back_word(map, word, Span::whole(map.domain()))?;
    Ok(Cylinder { word: *word, span, orientation: word.orientation() })
}

/// All cylinders of words of length `depth + 1`, stored by word code.
#[derive(Debug, Clone)]
pub struct Partition {
    pub depth: usize,
    pub spans: Vec<Span>,
    /// Largest cylinder length.
    pub lambda: f64,
}

impl Partition {
    pub fn word_len(&self) -> usize {
        self.depth + 1
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn cylinder(&self, code: u64) -> Cylinder {
        let word = Word { len: self.word_len() as u8, code };
        Cylinder { word, span: self.spans[code as usize], orientation: word.orientation() }
    }

    pub fn cylinders(&self) -> impl Iterator<Item = Cylinder> + '_ {
        (0..self.len() as u64).map(move |c| self.cylinder(c))
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.spans.iter().map(Span::length).collect()
    }

    /// CSV dump `word,lo,hi,length,orientation`, rows ordered by position.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut rows: Vec<Cylinder> = self.cylinders().collect();
        rows.sort_by(|a, b| a.span.lo.diff(&b.span.lo).total_cmp(&0.0));
        writeln!(out, "word,lo,hi,length,orientation")?;
        for c in rows {
            writeln!(out, "{},{},{},{},{}", c.word, c.lo() + 0.0, c.hi() + 0.0, c.length(), c.orientation)?;
        }
        Ok(())
    }

    fn from_spans(depth: usize, spans: Vec<Span>) -> Self {
        let lambda = spans.iter().map(Span::length).fold(0.0, f64::max);
        Partition { depth, spans, lambda }
    }

    /// Next level: `I_{jw} = g_j(I_w)`.
    pub fn extend<M: IntervalMap + Sync + ?Sized>(&self, map: &M) -> Result<Partition> {
        let n = self.spans.len();
        let build = |k: usize| pull_back(map, (k / n) as u8, &self.spans[k % n]);
        let spans: Result<Vec<Span>> = if n >= 2048 {
            (0..2 * n).into_par_iter().map(build).collect()
        } else {
            (0..2 * n).map(build).collect()
        };
        Ok(Partition::from_spans(self.depth + 1, spans?))
    }

    fn first<M: IntervalMap + ?Sized>(map: &M) -> Result<Partition> {
        let whole = Span::whole(map.domain());
        let spans = vec![pull_back(map, 0, &whole)?, pull_back(map, 1, &whole)?];
        Ok(Partition::from_spans(0, spans))
    }
}

fn check_budget(depth: usize, cap: usize) -> Result<()> {
    if depth > cap || depth + 1 > MAX_WORD_LEN {
        return Err(Error::BudgetExceeded { depth, cap });
    }
    Ok(())
}

/// The partition `η_n` with the default depth cap.
pub fn partition<M: IntervalMap + Sync + ?Sized>(map: &M, n: usize) -> Result<Partition> {
    partition_with_cap(map, n, DEFAULT_DEPTH_CAP)
}

pub fn partition_with_cap<M: IntervalMap + Sync + ?Sized>(
    map: &M,
    n: usize,
    cap: usize,
) -> Result<Partition> {
    check_budget(n, cap)?;
    let mut p = Partition::first(map)?;
    while p.depth < n {
        p = p.extend(map)?;
    }
    Ok(p)
}

/// Partitions `η_0, …, η_n`.
pub fn partition_levels<M: IntervalMap + Sync + ?Sized>(
    map: &M,
    n: usize,
    cap: usize,
) -> Result<Vec<Partition>> {
    check_budget(n, cap)?;
    let mut levels = vec![Partition::first(map)?];
    while levels.len() <= n {
        let next = levels.last().expect("nonempty").extend(map)?;
        levels.push(next);
    }
    Ok(levels)
}

/// Fit of `λ_n ≈ C λ^n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub c_fit: f64,
    pub lambda_fit: f64,
    /// Largest residual of the fit in `log λ_n`.
    pub residual: f64,
    pub non_exponential: bool,
    /// `λ_n` for `n = 0..=n_max`.
    pub lambdas: Vec<f64>,
}

/// Least-squares fit of `log λ_n` against `n` over `n = 2..=n_max`.
pub fn decay_rate<M: IntervalMap + Sync + ?Sized>(map: &M, n_max: usize) -> Result<DecayFit> {
    if n_max < 4 {
        return Err(Error::Degenerate(format!("decay fit needs n_max >= 4, got {n_max}")));
    }
    let levels = partition_levels(map, n_max, DEFAULT_DEPTH_CAP)?;
    let lambdas: Vec<f64> = levels.iter().map(|p| p.lambda).collect();
    Ok(fit_decay(&lambdas))
}

pub(crate) fn fit_decay(lambdas: &[f64]) -> DecayFit {
    let xs: Vec<f64> = (2..lambdas.len()).map(|n| n as f64).collect();
    let ys: Vec<f64> = lambdas[2..].iter().map(|l| l.ln()).collect();
    let fit = linear_fit(&xs, &ys).expect("at least three levels");
    DecayFit {
        c_fit: fit.intercept.exp(),
        lambda_fit: fit.slope.exp(),
        residual: fit.max_residual,
        non_exponential: fit.max_residual > 0.1,
        lambdas: lambdas.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::MapFamily;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    #[test]
    fn word_basics() {
        let a = w("0110");
        assert_eq!(a.len(), 4);
        assert_eq!(a.to_string(), "0110");
        assert_eq!(a.bit(0), 0);
        assert_eq!(a.bit(1), 1);
        assert_eq!(a.push_right(1).unwrap().to_string(), "01101");
        assert_eq!(a.push_left(1).unwrap().to_string(), "10110");
        assert_eq!(a.parent().unwrap().to_string(), "011");
        assert_eq!(w("01").concat(&w("110")).unwrap().to_string(), "01110");
        assert_eq!(a.orientation(), 1);
        assert_eq!(w("010").orientation(), -1);
        assert!("012".parse::<Word>().is_err());
        assert_eq!(a.push_right(2), Err(Error::InvalidBit(2)));
    }

    #[test]
    fn inverse_branch_examples() {
        let q = MapFamily::quadratic().at(0.0).unwrap();
        assert_eq!(inverse_branch(&q, 0, 1.0).unwrap(), 0.0);
        assert_eq!(inverse_branch(&q, 0, -1.0).unwrap(), -1.0);
        let q5 = MapFamily::quadratic().at(0.5).unwrap();
        assert!((inverse_branch(&q5, 1, 0.0).unwrap() - (1.5f64 / 2.5).sqrt()).abs() < 1e-15);
        assert!(matches!(inverse_branch(&q, 2, 0.0), Err(Error::InvalidBit(2))));
        assert!(matches!(inverse_branch(&q, 0, 1.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn generic_solver_matches_closed_form() {
        let fam = MapFamily::quadratic();
        for eps in [0.0, 0.1, 0.7] {
            let m = fam.at(eps).unwrap();
            for k in 0..=40 {
                let y = -1.0 + 0.05 * k as f64;
                for side in 0..2u8 {
                    let p = Pt::from_x(y, (-1.0, 1.0));
                    let closed = m.inverse_branch_pt(side, p).unwrap();
                    let generic = solve_branch(&m, side, p).unwrap();
                    assert!((closed.x - generic.x).abs() < 1e-13, "y={y} side={side}");
                    assert!((closed.lo - generic.lo).abs() < 1e-13);
                }
            }
            // deep offsets keep relative accuracy
            let p = Pt::from_lo(1e-18, (-1.0, 1.0));
            let closed = m.inverse_branch_pt(0, p).unwrap();
            let generic = solve_branch(&m, 0, p).unwrap();
            assert!((closed.lo / generic.lo - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn root_found_branches_invert_the_map() {
        for fam in [MapFamily::figure6(0.02).unwrap(), MapFamily::asym_quadratic(0.5).unwrap()] {
            let m = fam.at(0.0).unwrap();
            for k in 0..=40 {
                let y = -1.0 + 0.05 * k as f64;
                for side in 0..2u8 {
                    let x = inverse_branch(&m, side, y).unwrap();
                    assert!((m.eval(x) - y).abs() < 1e-13, "{} y={y}", fam.label());
                    assert!(if side == 0 { x <= 0.0 } else { x >= 0.0 });
                }
            }
        }
    }

    #[test]
    fn cylinder_examples() {
        let t0 = MapFamily::tent().at(0.0).unwrap();
        let c = cylinder(&t0, &w("0")).unwrap();
        assert_eq!((c.lo(), c.hi(), c.orientation), (-1.0, 0.0, 1));
        let t1 = MapFamily::tent().at(1.0).unwrap();
        let c = cylinder(&t1, &w("0")).unwrap();
        assert!((c.lo() + 1.0).abs() < 1e-15 && (c.hi() + 1.0 / 3.0).abs() < 1e-15);
        let q = MapFamily::quadratic().at(0.0).unwrap();
        let c = cylinder(&q, &w("00")).unwrap();
        assert_eq!(c.lo(), -1.0);
        assert!((c.hi() + 0.5f64.sqrt()).abs() < 1e-15);
        assert!(cylinder(&q, &Word::empty()).is_err());
    }

    #[test]
    fn partition_examples() {
        let t0 = MapFamily::tent().at(0.0).unwrap();
        let p = partition(&t0, 0).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.lambda, 1.0);
        let p = partition(&t0, 5).unwrap();
        assert_eq!(p.len(), 64);
        assert!(p.lengths().iter().all(|&l| (l - 0.03125).abs() < 1e-15));
        let q = MapFamily::quadratic().at(0.0).unwrap();
        let p = partition(&q, 10).unwrap();
        let expect = std::f64::consts::FRAC_PI_2 / 1024.0;
        assert!((p.lambda - expect).abs() < 1e-3 * expect, "{}", p.lambda);
        assert!(matches!(partition(&q, 23), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn partition_matches_direct_cylinders() {
        for fam in [MapFamily::quadratic(), MapFamily::figure6(-0.05).unwrap()] {
            let m = fam.at(0.0).unwrap();
            let p = partition(&m, 6).unwrap();
            for c in p.cylinders() {
                let d = cylinder(&m, &c.word).unwrap();
                assert!((c.lo() - d.lo()).abs() < 1e-12 && (c.hi() - d.hi()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nesting_and_orientation_law() {
        let fams = [
            MapFamily::quadratic(),
            MapFamily::tent(),
            MapFamily::gamma_power(3.0).unwrap(),
            MapFamily::asym_quadratic(0.4).unwrap(),
        ];
        for fam in fams {
            for eps in [0.0, 0.3] {
                let m = fam.at(eps).unwrap();
                let levels = partition_levels(&m, 11, DEFAULT_DEPTH_CAP).unwrap();
                for pair in levels.windows(2) {
                    for parent in pair[0].cylinders() {
                        let c0 = pair[1].cylinder(parent.word.code() << 1);
                        let c1 = pair[1].cylinder((parent.word.code() << 1) | 1);
                        for c in [&c0, &c1] {
                            assert!(parent.span.contains(&c.span.lo, 1e-12));
                            assert!(parent.span.contains(&c.span.hi, 1e-12));
                        }
                        let (left, right) = if c0.span.lo.diff(&c1.span.lo) < 0.0 { (c0, c1) } else { (c1, c0) };
                        assert!(right.span.lo.diff(&left.span.hi) >= 0.0, "children overlap");
                        let gap = right.span.lo.diff(&left.span.hi);
                        let total = left.length() + right.length() + gap;
                        assert!((total - parent.length()).abs() <= 1e-12 * parent.length().max(1e-300));
                        let even = parent.word.ones() % 2 == 0;
                        assert_eq!(left.word.bits().last() == Some(0), even, "orientation law at {}", parent.word);
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_gaps_at_boundary_of_hyperbolicity() {
        let q = MapFamily::quadratic().at(0.0).unwrap();
        let p = partition(&q, 0).unwrap();
        assert_eq!(p.spans[0].hi.x, 0.0);
        assert_eq!(p.spans[1].lo.x, 0.0);
    }

    #[test]
    fn decay_examples() {
        let t = decay_rate(&MapFamily::tent().at(0.0).unwrap(), 10).unwrap();
        assert!((t.lambda_fit - 0.5).abs() < 1e-10);
        let t = decay_rate(&MapFamily::tent().at(1.0).unwrap(), 10).unwrap();
        assert!((t.lambda_fit - 1.0 / 3.0).abs() < 1e-10);
        let q = decay_rate(&MapFamily::quadratic().at(0.0).unwrap(), 14).unwrap();
        assert!((q.lambda_fit - 0.5).abs() < 0.01);
        assert!(!q.non_exponential);
        assert!(decay_rate(&MapFamily::tent().at(0.0).unwrap(), 3).is_err());
    }

    #[test]
    fn csv_dump_is_ordered() {
        let p = partition(&MapFamily::tent().at(0.0).unwrap(), 1).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "word,lo,hi,length,orientation");
        assert_eq!(lines[1], "00,-1,-0.5,0.5,1");
        assert_eq!(lines[2], "01,-0.5,0,0.5,-1");
        assert_eq!(lines.len(), 5);
    }
}
