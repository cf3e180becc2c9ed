//! Commutative semirings over which annotations are aggregated.
//!
//! The engine treats annotations as an abstract type: it may copy them or
//! combine them with `plus` / `times`, and nothing else. In particular the
//! trait exposes no equality, subtraction, or division, and no engine code
//! depends on `Elem: PartialEq`. Tests that compare results do so on the
//! concrete representation, outside the engine boundary.
//!
//! Every place in the crate that touches an annotation goes through one of
//! these call sites:
//!
//! * [`crate::relation::join`] — `times` on matching row pairs
//! * [`crate::relation::project_aggregate`] — `plus` within each group
//! * [`crate::relation::Relation::from_rows`] — `plus` merging duplicate tuples
//! * [`crate::instance::merge_results`] — `plus` on shared keys
//! * [`crate::driver`] — `times` when a scalar sub-result scales a row
//! * [`fold_plus`] / [`fold_times`] below
//!
//! Semi-joins, anti-semi-joins, and projections without aggregation copy
//! annotations verbatim.

use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// A commutative semiring `(D, ⊕, ⊗, 0, 1)`.
///
/// `plus` and `times` must be associative and commutative, `times` must
/// distribute over `plus`, `zero` must annihilate `times` and be the identity
/// of `plus`, and `one` must be the identity of `times`. The axioms are
/// checked by property tests per shipped instance.
pub trait Semiring {
    type Elem: Clone + Send + Sync + std::fmt::Debug + 'static;

    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn plus(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn times(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;

    /// Parse the text encoding used in relation files.
    fn parse(&self, s: &str) -> Result<Self::Elem>;

    /// Format an element for file output. `parse(format(x))` must round-trip.
    fn format(&self, a: &Self::Elem) -> String;
}

/// ⊕-fold of a sequence, starting from `zero`.
pub fn fold_plus<S: Semiring>(ring: &S, elems: &[S::Elem]) -> S::Elem {
    elems.iter().fold(ring.zero(), |acc, e| ring.plus(&acc, e))
}

/// ⊗-fold of a sequence, starting from `one`.
pub fn fold_times<S: Semiring>(ring: &S, elems: &[S::Elem]) -> S::Elem {
    elems.iter().fold(ring.one(), |acc, e| ring.times(&acc, e))
}

/// Counting semiring: non-negative integers under `(+, ×)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Counting;

impl Semiring for Counting {
    type Elem = u64;

    fn zero(&self) -> u64 {
        0
    }
    fn one(&self) -> u64 {
        1
    }
    fn plus(&self, a: &u64, b: &u64) -> u64 {
        a + b
    }
    fn times(&self, a: &u64, b: &u64) -> u64 {
        a * b
    }
    fn parse(&self, s: &str) -> Result<u64> {
        s.trim()
            .parse()
            .map_err(|_| Error::Parse(format!("invalid counting annotation `{s}`")))
    }
    fn format(&self, a: &u64) -> String {
        a.to_string()
    }
}

/// Boolean semiring `(∨, ∧)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Boolean;

impl Semiring for Boolean {
    type Elem = bool;

    fn zero(&self) -> bool {
        false
    }
    fn one(&self) -> bool {
        true
    }
    fn plus(&self, a: &bool, b: &bool) -> bool {
        *a || *b
    }
    fn times(&self, a: &bool, b: &bool) -> bool {
        *a && *b
    }
    fn parse(&self, s: &str) -> Result<bool> {
        match s.trim() {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            other => Err(Error::Parse(format!(
                "invalid boolean annotation `{other}`"
            ))),
        }
    }
    fn format(&self, a: &bool) -> String {
        a.to_string()
    }
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("invalid rational annotation `{s}`"));
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| bad())?;
        let d: BigInt = den.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let digits = frac.len() as u32;
        let joined = format!("{int}{frac}");
        let n: BigInt = joined.parse().map_err(|_| bad())?;
        return Ok(BigRational::new(n, BigInt::from(10u32).pow(digits)));
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

fn format_rational(a: &BigRational) -> String {
    if a.denom().is_one() {
        a.numer().to_string()
    } else {
        format!("{}/{}", a.numer(), a.denom())
    }
}

/// Sum-product semiring over exact rationals.
#[derive(Debug, Clone, Copy, Default)]
pub struct SumProd;

impl Semiring for SumProd {
    type Elem = BigRational;

    fn zero(&self) -> BigRational {
        BigRational::zero()
    }
    fn one(&self) -> BigRational {
        BigRational::one()
    }
    fn plus(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a + b
    }
    fn times(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a * b
    }
    fn parse(&self, s: &str) -> Result<BigRational> {
        parse_rational(s)
    }
    fn format(&self, a: &BigRational) -> String {
        format_rational(a)
    }
}

/// Tropical max-product semiring `(max, ×)` over non-negative exact rationals.
///
/// Zero (the additive identity) is the rational `0`, which annihilates `×`
/// and is neutral for `max` as long as every element is non-negative; the
/// parser rejects negative values.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxProd;

impl Semiring for MaxProd {
    type Elem = BigRational;

    fn zero(&self) -> BigRational {
        BigRational::zero()
    }
    fn one(&self) -> BigRational {
        BigRational::one()
    }
    fn plus(&self, a: &BigRational, b: &BigRational) -> BigRational {
        if a >= b {
            a.clone()
        } else {
            b.clone()
        }
    }
    fn times(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a * b
    }
    fn parse(&self, s: &str) -> Result<BigRational> {
        let v = parse_rational(s)?;
        if v.is_negative() {
            return Err(Error::Parse(format!(
                "max-product annotations must be non-negative, got `{s}`"
            )));
        }
        Ok(v)
    }
    fn format(&self, a: &BigRational) -> String {
        format_rational(a)
    }
}

/// Wrapper that counts `plus` / `times` invocations, for cost measurement.
///
/// The counters are shared across clones of the handle returned by
/// [`Instrumented::counters`], so a caller can hand the ring to an engine and
/// read the totals afterwards.
#[derive(Debug, Default)]
pub struct Instrumented<S> {
    inner: S,
    plus_calls: AtomicU64,
    times_calls: AtomicU64,
}

impl<S> Instrumented<S> {
    pub fn new(inner: S) -> Self {
        Instrumented {
            inner,
            plus_calls: AtomicU64::new(0),
            times_calls: AtomicU64::new(0),
        }
    }

    /// `(plus_calls, times_calls)` so far.
    pub fn counters(&self) -> (u64, u64) {
        (
            self.plus_calls.load(Ordering::Relaxed),
            self.times_calls.load(Ordering::Relaxed),
        )
    }

    pub fn total_ops(&self) -> u64 {
        let (p, t) = self.counters();
        p + t
    }
}

impl<S: Semiring> Semiring for Instrumented<S> {
    type Elem = S::Elem;

    fn zero(&self) -> S::Elem {
        self.inner.zero()
    }
    fn one(&self) -> S::Elem {
        self.inner.one()
    }
    fn plus(&self, a: &S::Elem, b: &S::Elem) -> S::Elem {
        self.plus_calls.fetch_add(1, Ordering::Relaxed);
        self.inner.plus(a, b)
    }
    fn times(&self, a: &S::Elem, b: &S::Elem) -> S::Elem {
        self.times_calls.fetch_add(1, Ordering::Relaxed);
        self.inner.times(a, b)
    }
    fn parse(&self, s: &str) -> Result<S::Elem> {
        self.inner.parse(s)
    }
    fn format(&self, a: &S::Elem) -> String {
        self.inner.format(a)
    }
}
