//! Instance generators: hard star and line families with exact output
//! sizes, an adversarial line family on which every classic evaluation
//! order blows up, and seeded random acyclic instances for fuzzing.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::decomposition::gyo_join_tree;
use crate::error::{Error, Result};
use crate::fixtures;
use crate::instance::Instance;
use crate::query::Query;
use crate::relation::{Relation, Tuple, Value};
use crate::semiring::Counting;
use crate::yannakakis::yannakakis;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Star query, every relation the Cartesian product of its private
    /// attribute with the shared one; realized OUT is exactly ⌊OUT^(1/k)⌋^k.
    StarHard,
    /// Line query built from two fan blocks bridged by a diagonal; realized
    /// OUT is exactly ⌊√OUT⌋².
    LineHard,
    /// Line query (k = 3) on which both end-rooted classic plans materialize
    /// Ω(N·OUT) rows; verified by instrumentation at generation time.
    LineAdversarial,
    /// Random tree-shaped query with random rows; OUT measured post hoc.
    RandomAcyclic,
    /// Random line query instance.
    RandomLine,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Family> {
        match s {
            "star_hard" => Ok(Family::StarHard),
            "line_hard" => Ok(Family::LineHard),
            "line_adversarial" => Ok(Family::LineAdversarial),
            "random_acyclic" => Ok(Family::RandomAcyclic),
            "random_line" => Ok(Family::RandomLine),
            other => Err(Error::Parse(format!("unknown generator family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GeneratorSpec {
    pub family: Family,
    pub n: u64,
    pub out: u64,
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug)]
pub struct Generated {
    pub query: Query,
    pub instance: Instance<u64>,
    /// Exact for the hard families; absent for the random ones.
    pub realized_out: Option<u64>,
}

pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    match spec.family {
        Family::StarHard => gen_star_hard(spec.k, spec.n, spec.out, spec.seed),
        Family::LineHard => gen_line_hard(spec.k, spec.n, spec.out, spec.seed),
        Family::LineAdversarial => gen_line_adversarial(spec.k, spec.n, spec.out, spec.seed),
        Family::RandomAcyclic => Ok(gen_random_acyclic(spec)),
        Family::RandomLine => Ok(gen_random_line(spec)),
    }
}

fn int_rows(pairs: impl IntoIterator<Item = (i64, i64)>, weight: u64) -> Vec<(Tuple, u64)> {
    pairs
        .into_iter()
        .map(|(a, b)| {
            (
                vec![Value::Int(a), Value::Int(b)].into_boxed_slice(),
                weight,
            )
        })
        .collect()
}

fn rel_from(schema: Vec<usize>, rows: Vec<(Tuple, u64)>) -> Relation<u64> {
    Relation::from_rows(schema, rows, &Counting).expect("generator rows are well formed")
}

/// Star with `k` arms: ⌊out^(1/k)⌋ values per arm attribute, every arm the
/// full product with the shared attribute's `n / (k·a)` values. Each output
/// tuple costs a full pass over the shared domain to aggregate.
pub fn gen_star_hard(k: usize, n: u64, out: u64, seed: u64) -> Result<Generated> {
    if k < 2 {
        return Err(Error::InfeasibleParams("star needs k >= 2".into()));
    }
    if out == 0 {
        return Err(Error::InfeasibleParams(
            "target OUT must be positive".into(),
        ));
    }
    let a = (out as f64).powf(1.0 / k as f64).floor() as u64;
    let a = {
        // Floating-point root can undershoot by one.
        let mut a = a.max(1);
        while (a + 1).pow(k as u32) <= out {
            a += 1;
        }
        while a > 1 && a.pow(k as u32) > out {
            a -= 1;
        }
        a
    };
    let b = n / (k as u64 * a);
    if b == 0 {
        return Err(Error::InfeasibleParams(format!(
            "n = {n} too small for k = {k}, OUT = {out}: needs {} rows per relation",
            a
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let query = fixtures::star_query(k);
    let mut instance = Instance::new();
    for (i, edge) in query.edges().iter().enumerate() {
        let schema: Vec<usize> = vec![
            query.attr_id(&format!("A{}", i + 1)).unwrap(),
            query.attr_id("B").unwrap(),
        ];
        let mut rows = Vec::with_capacity((a * b) as usize);
        for x in 0..a {
            for y in 0..b {
                rows.push((
                    vec![Value::Int(x as i64), Value::Int(y as i64)].into_boxed_slice(),
                    rng.gen_range(1..=3u64),
                ));
            }
        }
        instance.insert(edge.id, rel_from(schema, rows));
    }
    Ok(Generated {
        query,
        instance,
        realized_out: Some(a.pow(k as u32)),
    })
}

/// Line whose ends fan out to ⌊√out⌋ values each through a shared middle
/// domain sized to hit `n`; every end pair joins, so OUT = ⌊√out⌋² exactly.
pub fn gen_line_hard(k: usize, n: u64, out: u64, seed: u64) -> Result<Generated> {
    if k < 2 {
        return Err(Error::InfeasibleParams("line needs k >= 2".into()));
    }
    if out == 0 {
        return Err(Error::InfeasibleParams(
            "target OUT must be positive".into(),
        ));
    }
    let a = crate::line::isqrt_ceil(out).max(1);
    let a = if a * a > out && a > 1 { a - 1 } else { a };
    let denom = 2 * a + (k as u64 - 2);
    let m = n / denom;
    if m == 0 {
        return Err(Error::InfeasibleParams(format!(
            "n = {n} too small for k = {k}, OUT = {out}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let query = fixtures::line_query(k);
    let attr = |i: usize| query.attr_id(&format!("A{}", i + 1)).unwrap();
    let mut instance = Instance::new();
    for (i, edge) in query.edges().iter().enumerate() {
        let schema = vec![attr(i), attr(i + 1)];
        let rows = if i == 0 {
            int_rows(
                (0..a as i64).flat_map(|x| (0..m as i64).map(move |y| (x, y))),
                rng.gen_range(1..=2),
            )
        } else if i == k - 1 {
            int_rows(
                (0..m as i64).flat_map(|y| (0..a as i64).map(move |z| (y, z))),
                1,
            )
        } else {
            int_rows((0..m as i64).map(|y| (y, y)), 1)
        };
        instance.insert(edge.id, rel_from(schema, rows));
    }
    Ok(Generated {
        query,
        instance,
        realized_out: Some(a * a),
    })
}

/// Two mirror-image gadgets over a 3-relation line. In one gadget the left
/// end fans out to OUT/2 values funneled through a single middle value and a
/// wide bridge; the other gadget mirrors it. Whichever end the classic plan
/// roots at, the opposite gadget's bridge joins a full fan and materializes
/// ≳ N·OUT/8 rows. The construction is verified by instrumented runs from
/// both ends before being returned.
pub fn gen_line_adversarial(k: usize, n: u64, out: u64, seed: u64) -> Result<Generated> {
    if k != 3 {
        return Err(Error::InfeasibleParams(
            "the adversarial line family is built for k = 3".into(),
        ));
    }
    let half = (out / 2).max(1);
    let out = half * 2;
    if n < 100 * crate::line::isqrt_ceil(out) {
        return Err(Error::InfeasibleParams(
            "need n >= 100·√OUT for the adversarial property to separate".into(),
        ));
    }
    if out > n / 5 {
        return Err(Error::InfeasibleParams(
            "need OUT <= n/5 for the adversarial property to separate".into(),
        ));
    }
    let m = (n - out) / 4;
    let query = fixtures::line_query(3);
    let mut r1 = Vec::new();
    let mut r2 = Vec::new();
    let mut r3 = Vec::new();
    // Gadget one: fan at the left end, funnel value 0, bridge 0..m, sink z.
    let bridge1 = 0..m as i64;
    let z1 = -1i64;
    for x in 0..half as i64 {
        r1.push((x, 0));
    }
    for c in bridge1.clone() {
        r2.push((0, c));
        r3.push((c, z1));
    }
    // Gadget two (disjoint values): single source, wide bridge, fan at the
    // right end.
    let w2 = -2i64;
    let funnel2 = -3i64;
    for c in m as i64..(2 * m) as i64 {
        r1.push((w2, c));
        r2.push((c, funnel2));
    }
    for z in 0..half as i64 {
        r3.push((funnel2, z));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    r1.shuffle(&mut rng);
    r2.shuffle(&mut rng);
    r3.shuffle(&mut rng);

    let attr = |i: usize| query.attr_id(&format!("A{}", i + 1)).unwrap();
    let mut instance = Instance::new();
    for (i, rows) in [r1, r2, r3].into_iter().enumerate() {
        instance.insert(
            query.edges()[i].id,
            rel_from(vec![attr(i), attr(i + 1)], int_rows(rows, 1)),
        );
    }

    // Verify the property: both end-rooted classic plans materialize at
    // least N·OUT/10 rows.
    let realized_n = instance.input_size();
    let t = gyo_join_tree(&query).expect("line is acyclic");
    let ends: Vec<usize> = t.leaves();
    for &root in &ends {
        let (_, stats) = yannakakis(&query, &t, root, &instance, &Counting)?;
        let floor = realized_n as f64 * out as f64 * 0.1;
        if (stats.max_intermediate_rows as f64) < floor {
            return Err(Error::InfeasibleParams(format!(
                "adversarial property failed at root {root}: {} < {floor}",
                stats.max_intermediate_rows
            )));
        }
    }
    Ok(Generated {
        query,
        instance,
        realized_out: Some(out),
    })
}

/// Random tree-shaped acyclic query with seeded random rows. Attributes are
/// shared along tree edges, plus occasional hub attributes spanning a node
/// and all its children (keeping the running-intersection property, hence
/// acyclicity); every attribute is an output independently with probability
/// ~0.45. Row targets are hit exactly (distinct tuples), so the realized N
/// matches the requested size.
pub fn gen_random_acyclic(spec: &GeneratorSpec) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.k.clamp(1, 8);
    // Tree over relations; each edge contributes 1-2 shared attributes.
    let mut rel_attrs: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut attr_names: Vec<String> = Vec::new();
    let fresh = |names: &mut Vec<String>| {
        let name = format!("X{}", names.len());
        names.push(name.clone());
        name
    };
    let mut parents = vec![0usize; k];
    for child in 1..k {
        let parent = rng.gen_range(0..child);
        parents[child] = parent;
        for _ in 0..rng.gen_range(1..=2) {
            let a = fresh(&mut attr_names);
            rel_attrs[parent].push(a.clone());
            rel_attrs[child].push(a);
        }
    }
    // Hub attributes: shared by a node and all of its children at once.
    for hub in 0..k {
        let members: Vec<usize> = (hub..k)
            .filter(|&v| v == hub || parents[v] == hub)
            .collect();
        if members.len() >= 3 && rng.gen_bool(0.35) {
            let a = fresh(&mut attr_names);
            for &m in &members {
                rel_attrs[m].push(a.clone());
            }
        }
    }
    for attrs in rel_attrs.iter_mut() {
        let private = if attrs.is_empty() {
            rng.gen_range(1..=2)
        } else {
            rng.gen_range(0..=2)
        };
        for _ in 0..private {
            let a = fresh(&mut attr_names);
            attrs.push(a.clone());
        }
        if attrs.is_empty() {
            let a = fresh(&mut attr_names);
            attrs.push(a.clone());
        }
    }
    let output: Vec<String> = attr_names
        .iter()
        .filter(|_| rng.gen_bool(0.45))
        .cloned()
        .collect();
    let rel_names: Vec<String> = (0..k).map(|i| format!("R{i}")).collect();
    let attrs_ref: Vec<&str> = attr_names.iter().map(|s| s.as_str()).collect();
    let rels_own: Vec<(String, Vec<&str>)> = rel_names
        .iter()
        .zip(&rel_attrs)
        .map(|(n, attrs)| (n.clone(), attrs.iter().map(|s| s.as_str()).collect()))
        .collect();
    let rels_ref: Vec<(&str, &[&str])> = rels_own
        .iter()
        .map(|(n, a)| (n.as_str(), a.as_slice()))
        .collect();
    let output_ref: Vec<&str> = output.iter().map(|s| s.as_str()).collect();
    let query = Query::new(&attrs_ref, &rels_ref, &output_ref).expect("generated query valid");

    let per_rel = (spec.n as usize / k).max(1);
    let mut instance = Instance::new();
    for e in query.edges() {
        let arity = e.attrs.len();
        let schema: Vec<usize> = e.attrs.iter().collect();
        let dom: Vec<i64> = {
            let d = rng.gen_range(2..=8);
            (0..d).collect()
        };
        let mut seen = std::collections::HashSet::new();
        let mut rows = Vec::new();
        let cap = dom.len().pow(arity as u32);
        let want = per_rel.min(cap);
        let mut guard = 0;
        while rows.len() < want && guard < want * 50 {
            guard += 1;
            let t: Tuple = (0..arity)
                .map(|_| Value::Int(*dom.choose(&mut rng).unwrap()))
                .collect();
            if seen.insert(t.clone()) {
                rows.push((t, rng.gen_range(1..=4u64)));
            }
        }
        instance.insert(e.id, rel_from(schema, rows));
    }
    Generated {
        query,
        instance,
        realized_out: None,
    }
}

/// Random instance of a line query with `k` relations.
pub fn gen_random_line(spec: &GeneratorSpec) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.k.max(2);
    let query = fixtures::line_query(k);
    let per_rel = (spec.n as usize / k).max(1);
    let doms: Vec<i64> = (0..=k)
        .map(|_| rng.gen_range(2..=(per_rel as i64).clamp(2, 40)))
        .collect();
    let attr = |i: usize| query.attr_id(&format!("A{}", i + 1)).unwrap();
    let mut instance = Instance::new();
    for (i, e) in query.edges().iter().enumerate() {
        let mut seen = std::collections::HashSet::new();
        let mut rows = Vec::new();
        let cap = (doms[i] * doms[i + 1]) as usize;
        let want = per_rel.min(cap);
        let mut guard = 0;
        while rows.len() < want && guard < want * 50 {
            guard += 1;
            let t: Tuple = vec![
                Value::Int(rng.gen_range(0..doms[i])),
                Value::Int(rng.gen_range(0..doms[i + 1])),
            ]
            .into_boxed_slice();
            if seen.insert(t.clone()) {
                rows.push((t, rng.gen_range(1..=4u64)));
            }
        }
        instance.insert(e.id, rel_from(vec![attr(i), attr(i + 1)], rows));
    }
    Generated {
        query,
        instance,
        realized_out: None,
    }
}

/// Map counting annotations into another semiring for cross-ring testing.
pub fn map_annotations<S: crate::semiring::Semiring>(
    inst: &Instance<u64>,
    f: impl Fn(u64) -> S::Elem,
) -> Instance<S::Elem> {
    let mut out = Instance::new();
    for (e, r) in inst.relations() {
        let mut nr = Relation::empty(r.schema().to_vec());
        for (t, w) in r.rows() {
            nr.push_row(t.clone(), f(*w));
        }
        out.insert(e, nr);
    }
    out
}
