//! Codes `(.i₀i₁…)` of the topological Cantor set and dual points
//! `(…i₁i₀.)` of its dual, each stored as a finite prefix plus a tail
//! descriptor.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::branches::{cylinder, Word, MAX_WORD_LEN};
use crate::error::{Error, Result};
use crate::family::IntervalMap;
use crate::point::{chart_for, Pt};

/// What follows the explicit coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tail {
    AllZeros,
    /// Repeating block, first coordinate after the explicit ones first.
    Periodic(Vec<u8>),
    /// No coordinates beyond the explicit ones.
    Truncated,
}

impl Tail {
    fn normalized(self) -> Result<Tail> {
        match self {
            Tail::Periodic(block) => {
                if block.is_empty() {
                    return Err(Error::InvalidWord("empty periodic block".into()));
                }
                if let Some(&b) = block.iter().find(|&&b| b > 1) {
                    return Err(Error::InvalidBit(b));
                }
                if block.iter().all(|&b| b == 0) {
                    Ok(Tail::AllZeros)
                } else {
                    Ok(Tail::Periodic(block))
                }
            }
            t => Ok(t),
        }
    }

    fn coord(&self, k: usize) -> Option<u8> {
        match self {
            Tail::AllZeros => Some(0),
            Tail::Periodic(block) => Some(block[k % block.len()]),
            Tail::Truncated => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Class {
    /// Coordinates eventually all zero.
    A,
    B,
}

/// Shared storage: explicit coordinates `i₀, i₁, …` in index order, then the
/// tail.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Seq {
    head: Vec<u8>,
    tail: Tail,
}

impl Seq {
    fn new(head: Vec<u8>, tail: Tail) -> Result<Self> {
        if let Some(&b) = head.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidBit(b));
        }
        Ok(Seq { head, tail: tail.normalized()? })
    }

    fn coord(&self, k: usize) -> Result<u8> {
        if k < self.head.len() {
            return Ok(self.head[k]);
        }
        self.tail
            .coord(k - self.head.len())
            .ok_or(Error::TruncatedExhausted { available: self.head.len(), needed: k + 1 })
    }

    fn available(&self) -> Option<usize> {
        match self.tail {
            Tail::Truncated => Some(self.head.len()),
            _ => None,
        }
    }

    fn shift(&self) -> Result<Seq> {
        if !self.head.is_empty() {
            return Ok(Seq { head: self.head[1..].to_vec(), tail: self.tail.clone() });
        }
        match &self.tail {
            Tail::AllZeros => Ok(self.clone()),
            Tail::Periodic(block) => {
                let mut b = block.clone();
                b.rotate_left(1);
                Ok(Seq { head: Vec::new(), tail: Tail::Periodic(b) })
            }
            Tail::Truncated => Err(Error::TruncatedExhausted { available: 0, needed: 1 }),
        }
    }
}

/// A point `(…i₂i₁i₀.)` of the dual Cantor set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DualPoint(Seq);

impl DualPoint {
    /// `suffix` lists the rightmost coordinates, `i₀` first.
    pub fn new(suffix: Vec<u8>, tail: Tail) -> Result<Self> {
        Ok(DualPoint(Seq::new(suffix, tail)?))
    }

    /// `(0_∞ w.)` with `w` written in reading order.
    pub fn eventually_zero(w: &str) -> Result<Self> {
        Self::new(reading_to_index(w)?, Tail::AllZeros)
    }

    /// Purely periodic point whose block is given `i₀` first.
    pub fn periodic(block: &[u8]) -> Result<Self> {
        Self::new(Vec::new(), Tail::Periodic(block.to_vec()))
    }

    /// Truncated point whose known coordinates are `w`, written in reading order.
    pub fn truncated(w: &str) -> Result<Self> {
        Self::new(reading_to_index(w)?, Tail::Truncated)
    }

    /// Uniformly random truncated point with `len` coordinates.
    pub fn random_truncated<R: Rng>(rng: &mut R, len: usize) -> Self {
        let suffix = (0..len).map(|_| rng.random_range(0..2u8)).collect();
        DualPoint(Seq { head: suffix, tail: Tail::Truncated })
    }

    pub fn suffix(&self) -> &[u8] {
        &self.0.head
    }

    pub fn tail(&self) -> &Tail {
        &self.0.tail
    }

    pub fn class(&self) -> Class {
        if self.0.tail == Tail::AllZeros {
            Class::A
        } else {
            Class::B
        }
    }

    /// Coordinate `i_k`.
    pub fn coord(&self, k: usize) -> Result<u8> {
        self.0.coord(k)
    }

    /// Number of coordinates available, `None` if unbounded.
    pub fn depth(&self) -> Option<usize> {
        self.0.available()
    }

    /// `σ*`: drops `i₀`.
    pub fn shift(&self) -> Result<DualPoint> {
        Ok(DualPoint(self.0.shift()?))
    }

    /// The word `w_n i = i_n … i₁ i₀` of the first `n + 1` coordinates.
    pub fn approximant(&self, n: usize) -> Result<Word> {
        if n + 1 > MAX_WORD_LEN {
            return Err(Error::InvalidWord(format!("approximant of length {} exceeds 64", n + 1)));
        }
        let mut w = Word::empty();
        for k in 0..=n {
            w = w.push_left(self.coord(k)?)?;
        }
        Ok(w)
    }
}

fn reading_to_index(w: &str) -> Result<Vec<u8>> {
    let word: Word = w.parse()?;
    Ok(word.bits().rev().collect())
}

fn render_bits<'a>(bits: impl Iterator<Item = &'a u8>) -> String {
    bits.map(|b| if *b == 0 { '0' } else { '1' }).collect()
}

impl fmt::Display for DualPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0.tail {
            Tail::AllZeros => write!(f, "0^inf")?,
            Tail::Periodic(block) => write!(f, "({})^inf", render_bits(block.iter().rev()))?,
            Tail::Truncated => write!(f, "trunc")?,
        }
        write!(f, "|{}.", render_bits(self.0.head.iter().rev()))
    }
}

fn parse_tail(s: &str, reversed: bool) -> Result<Tail> {
    if s == "0^inf" {
        return Ok(Tail::AllZeros);
    }
    if s == "trunc" {
        return Ok(Tail::Truncated);
    }
    let inner = s
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(")^inf"))
        .ok_or_else(|| Error::InvalidWord(s.to_string()))?;
    let word: Word = inner.parse()?;
    let mut block: Vec<u8> = word.bits().collect();
    if reversed {
        block.reverse();
    }
    Ok(Tail::Periodic(block))
}

impl FromStr for DualPoint {
    type Err = Error;

    /// Parses `tail|suffix.` such as `0^inf|10110.` or `(10)^inf|.`.
    fn from_str(s: &str) -> Result<Self> {
        let body = s.strip_suffix('.').ok_or_else(|| Error::InvalidWord(s.to_string()))?;
        let (tail, suffix) = body.split_once('|').ok_or_else(|| Error::InvalidWord(s.to_string()))?;
        DualPoint::new(reading_to_index(suffix)?, parse_tail(tail, true)?)
    }
}

/// A point `(.i₀i₁…)` of the topological Cantor set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Code(Seq);

impl Code {
    /// `prefix` lists `i₀, i₁, …`.
    pub fn new(prefix: Vec<u8>, tail: Tail) -> Result<Self> {
        Ok(Code(Seq::new(prefix, tail)?))
    }

    pub fn random_truncated<R: Rng>(rng: &mut R, len: usize) -> Self {
        let prefix = (0..len).map(|_| rng.random_range(0..2u8)).collect();
        Code(Seq { head: prefix, tail: Tail::Truncated })
    }

    pub fn coord(&self, k: usize) -> Result<u8> {
        self.0.coord(k)
    }

    /// `σ`: drops `i₀`.
    pub fn shift(&self) -> Result<Code> {
        Ok(Code(self.0.shift()?))
    }

    /// The word `i₀ i₁ … i_n`.
    pub fn word(&self, n: usize) -> Result<Word> {
        if n + 1 > MAX_WORD_LEN {
            return Err(Error::InvalidWord(format!("word of length {} exceeds 64", n + 1)));
        }
        let mut w = Word::empty();
        for k in 0..=n {
            w = w.push_right(self.coord(k)?)?;
        }
        Ok(w)
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, ".{}|", render_bits(self.0.head.iter()))?;
        match &self.0.tail {
            Tail::AllZeros => write!(f, "0^inf"),
            Tail::Periodic(block) => write!(f, "({})^inf", render_bits(block.iter())),
            Tail::Truncated => write!(f, "trunc"),
        }
    }
}

impl FromStr for Code {
    type Err = Error;

    /// Parses `.prefix|tail` such as `.0110|(10)^inf`.
    fn from_str(s: &str) -> Result<Self> {
        let body = s.strip_prefix('.').ok_or_else(|| Error::InvalidWord(s.to_string()))?;
        let (prefix, tail) = body.split_once('|').ok_or_else(|| Error::InvalidWord(s.to_string()))?;
        let word: Word = prefix.parse()?;
        Code::new(word.bits().collect(), parse_tail(tail, false)?)
    }
}

/// Midpoint of `I_{w_depth}` with half its length as the error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointEstimate {
    pub x: f64,
    pub error_bound: f64,
}

/// The point of the Cantor set with the given code, located inside the
/// cylinder of its first `depth + 1` coordinates.
pub fn point_from_code<M: IntervalMap + ?Sized>(map: &M, code: &Code, depth: usize) -> Result<PointEstimate> {
    let c = cylinder(map, &code.word(depth)?)?;
    let (lo, hi) = (c.span.lo, c.span.hi);
    let chart = chart_for(&[lo, hi]);
    let half = 0.5 * c.length();
    let x = match chart {
        crate::point::Chart::Lo => Pt::from_lo(lo.lo + half, map.domain()).x,
        crate::point::Chart::Hi => Pt::from_hi(hi.hi + half, map.domain()).x,
        crate::point::Chart::Mid => 0.5 * (lo.x + hi.x),
    };
    Ok(PointEstimate { x, error_bound: half })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::MapFamily;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shift_examples() {
        let ones = DualPoint::periodic(&[1]).unwrap();
        assert_eq!(ones.shift().unwrap(), ones);
        let a = DualPoint::eventually_zero("10").unwrap();
        assert_eq!(a.shift().unwrap(), DualPoint::eventually_zero("1").unwrap());
        assert_eq!(DualPoint::eventually_zero("").unwrap().shift().unwrap().class(), Class::A);
        let t = DualPoint::truncated("").unwrap();
        assert!(matches!(t.shift(), Err(Error::TruncatedExhausted { .. })));
    }

    #[test]
    fn classification() {
        for w in ["", "1", "0110", "111"] {
            assert_eq!(DualPoint::eventually_zero(w).unwrap().class(), Class::A);
        }
        assert_eq!(DualPoint::periodic(&[1, 0]).unwrap().class(), Class::B);
        assert_eq!(DualPoint::periodic(&[0, 0]).unwrap().class(), Class::A);
        assert_eq!(DualPoint::truncated("101").unwrap().class(), Class::B);
    }

    #[test]
    fn approximant_examples() {
        let a = DualPoint::eventually_zero("1").unwrap();
        assert_eq!(a.approximant(3).unwrap().to_string(), "0001");
        let p = DualPoint::periodic(&[1, 0]).unwrap();
        assert_eq!(p.approximant(3).unwrap().to_string(), "0101");
        let t = DualPoint::truncated("110").unwrap();
        assert_eq!(t.approximant(2).unwrap().to_string(), "110");
        assert!(matches!(t.approximant(3), Err(Error::TruncatedExhausted { available: 3, needed: 4 })));
    }

    #[test]
    fn text_round_trip() {
        for s in ["0^inf|10110.", "(01)^inf|.", "(011)^inf|1.", "trunc|0101.", "0^inf|."] {
            let p: DualPoint = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        let p: DualPoint = "(01)^inf|.".parse().unwrap();
        assert_eq!(p, DualPoint::periodic(&[1, 0]).unwrap());
        for s in [".0110|(10)^inf", ".|0^inf", ".1|trunc"] {
            let c: Code = s.parse().unwrap();
            assert_eq!(c.to_string(), s);
        }
        assert!("0^inf|102.".parse::<DualPoint>().is_err());
        assert!("0^inf|10".parse::<DualPoint>().is_err());
    }

    #[test]
    fn point_from_code_examples() {
        let q = MapFamily::quadratic().at(0.0).unwrap();
        let zeros = Code::new(vec![], Tail::AllZeros).unwrap();
        let p = point_from_code(&q, &zeros, 20).unwrap();
        assert!((p.x + 1.0).abs() <= 2.0 * p.error_bound && p.error_bound < 1e-10);
        let ones = Code::new(vec![], Tail::Periodic(vec![1])).unwrap();
        let p = point_from_code(&q, &ones, 30).unwrap();
        assert!((p.x - 0.5).abs() <= p.error_bound, "{p:?}");
        let t = MapFamily::tent().at(0.0).unwrap();
        let p = point_from_code(&t, &ones, 40).unwrap();
        assert!((p.x - 1.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn conjugacy_with_the_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for eps in [0.0, 0.2] {
            let q = MapFamily::quadratic().at(eps).unwrap();
            for _ in 0..100 {
                let a = Code::random_truncated(&mut rng, 42);
                let x = point_from_code(&q, &a, 40).unwrap().x;
                let y = point_from_code(&q, &a.shift().unwrap(), 40).unwrap().x;
                assert!((q.eval(x) - y).abs() < 1e-8, "{a}");
            }
        }
    }

    #[test]
    fn error_bounds_shrink_at_the_decay_rate() {
        let q = MapFamily::quadratic().at(0.3).unwrap();
        let fit = crate::branches::decay_rate(&q, 14).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // codes lingering near the fixed point -1 contract faster than the
        // widest cylinders, so single codes are only bounded above
        let mut log_sum = 0.0;
        for _ in 0..50 {
            let code = Code::random_truncated(&mut rng, 21);
            let b10 = point_from_code(&q, &code, 10).unwrap().error_bound;
            let b20 = point_from_code(&q, &code, 20).unwrap().error_bound;
            let r = (b20 / b10).powf(0.1);
            assert!(r <= fit.lambda_fit + 0.1, "{code}: mean ratio {r} vs {}", fit.lambda_fit);
            log_sum += r.ln();
        }
        let typical = (log_sum / 50.0).exp();
        assert!((typical - fit.lambda_fit).abs() <= 0.1, "{typical} vs {}", fit.lambda_fit);
    }

    fn arb_dual() -> impl Strategy<Value = DualPoint> {
        let bits = prop::collection::vec(0u8..2, 0..8);
        (bits.clone(), prop::collection::vec(0u8..2, 1..4), 0..3u8).prop_map(|(s, block, kind)| {
            let tail = match kind {
                0 => Tail::AllZeros,
                1 => Tail::Periodic(block),
                _ => Tail::Truncated,
            };
            DualPoint::new(s, tail).unwrap()
        })
    }

    proptest! {
        #[test]
        fn shift_commutes_with_approximants(a in arb_dual(), n in 1usize..20) {
            if let (Ok(w), Ok(shifted)) = (a.approximant(n), a.shift()) {
                let v = shifted.approximant(n - 1).unwrap();
                prop_assert_eq!(v, Word::from_code(w.code() >> 1, n).unwrap());
            }
        }

        #[test]
        fn class_is_shift_invariant(a in arb_dual()) {
            if let Ok(s) = a.shift() {
                prop_assert_eq!(s.class(), a.class());
            }
        }
    }
}
