//! Shared helpers for integration tests.
#![allow(dead_code)]

use joinagg::generators::{gen_random_acyclic, Family, GeneratorSpec};
use joinagg::instance::Instance;
use joinagg::query::Query;
use joinagg::relation::Relation;
use joinagg::semiring::{Boolean, MaxProd, SumProd};
use num_bigint::BigInt;
use num_rational::BigRational;

/// A seeded random acyclic query with small relations, counting weights.
pub fn random_case(seed: u64, max_rels: usize, rows_per_rel: u64) -> (Query, Instance<u64>) {
    let spec = GeneratorSpec {
        family: Family::RandomAcyclic,
        n: rows_per_rel * max_rels as u64,
        out: 0,
        k: (seed as usize % max_rels) + 1,
        seed,
    };
    let g = gen_random_acyclic(&spec);
    (g.query, g.instance)
}

pub fn to_bool(inst: &Instance<u64>) -> Instance<bool> {
    joinagg::generators::map_annotations::<Boolean>(inst, |w| w % 3 != 0)
}

pub fn to_rational(inst: &Instance<u64>) -> Instance<BigRational> {
    joinagg::generators::map_annotations::<SumProd>(inst, |w| {
        BigRational::new(BigInt::from(w as i64 - 2), BigInt::from(3))
    })
}

pub fn to_tropical(inst: &Instance<u64>) -> Instance<BigRational> {
    joinagg::generators::map_annotations::<MaxProd>(inst, |w| {
        BigRational::new(BigInt::from(w), BigInt::from(w + 1))
    })
}

/// Compare two result sets on the concrete representation.
pub fn same_result<E: PartialEq + Clone + std::fmt::Debug>(
    a: &Relation<E>,
    b: &Relation<E>,
) -> bool {
    a.canonical().rows() == b.canonical().rows()
}

#[allow(dead_code)]
pub fn boolean() -> Boolean {
    Boolean
}
#[allow(dead_code)]
pub fn sum_prod() -> SumProd {
    SumProd
}
#[allow(dead_code)]
pub fn max_prod() -> MaxProd {
    MaxProd
}

/// Seeded conversion of a counting instance into each shipped semiring,
/// exercised by the oracle-equivalence suites.
#[allow(dead_code)]
pub fn all_ring_names() -> &'static [&'static str] {
    &["counting", "boolean", "tropical", "sumprod"]
}

#[allow(dead_code)]
pub fn check_all_rings(q: &Query, inst: &Instance<u64>) -> Result<(), String> {
    use joinagg::driver::{evaluate, Algorithm};
    use joinagg::oracle::brute_force;
    use joinagg::semiring::Counting;

    let oracle = brute_force(q, inst, &Counting).map_err(|e| e.to_string())?;
    let (got, _) =
        evaluate(q, inst, &Counting, None, Algorithm::Auto).map_err(|e| e.to_string())?;
    if !same_result(&oracle, &got) {
        return Err(format!(
            "counting mismatch:\noracle {:?}\ngot    {:?}",
            oracle.canonical().rows(),
            got.canonical().rows()
        ));
    }

    let b = to_bool(inst);
    let oracle = brute_force(q, &b, &Boolean).map_err(|e| e.to_string())?;
    let (got, _) = evaluate(q, &b, &Boolean, None, Algorithm::Auto).map_err(|e| e.to_string())?;
    if !same_result(&oracle, &got) {
        return Err("boolean mismatch".into());
    }

    let r = to_rational(inst);
    let oracle = brute_force(q, &r, &SumProd).map_err(|e| e.to_string())?;
    let (got, _) = evaluate(q, &r, &SumProd, None, Algorithm::Auto).map_err(|e| e.to_string())?;
    if !same_result(&oracle, &got) {
        return Err("sum-product mismatch".into());
    }

    let t = to_tropical(inst);
    let oracle = brute_force(q, &t, &MaxProd).map_err(|e| e.to_string())?;
    let (got, _) = evaluate(q, &t, &MaxProd, None, Algorithm::Auto).map_err(|e| e.to_string())?;
    if !same_result(&oracle, &got) {
        return Err("max-product mismatch".into());
    }
    Ok(())
}
