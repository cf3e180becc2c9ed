//! Line queries: the two-plan partition algorithm and a KMV output-size
//! estimator.
//!
//! The evaluator walks the chain left to right keeping `T_i`, the aggregated
//! reachability relation from the left end to level `i+1` through light
//! values only. Values whose degree (distinct left-end partners) exceeds
//! ⌈√OUT~⌉ are heavy; each level's heavy rows are routed to a sub-query
//! evaluated with the plan rooted at the left end, and the all-light residue
//! is finished from the right end. The ⊕ of the parts is the exact result.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use crate::decomposition::gyo_join_tree;
use crate::error::{Error, Result};
use crate::instance::{merge_results, Instance, ResultSet};
use crate::query::{AttrId, AttrSet, EdgeId, Query};
use crate::relation::{
    join, key_counts, project_aggregate, semi_join_keys, KeySet, Relation, Value,
};
use crate::semiring::Semiring;
use crate::stats::RunStats;
use crate::yannakakis::yannakakis_with_stats;

/// A query recognized as a line: edges ordered into a chain, attributes
/// ordered end to end. The left end is the output attribute with the lowest
/// id.
#[derive(Debug, Clone)]
pub struct LineShape {
    pub edge_order: Vec<EdgeId>,
    pub attr_chain: Vec<AttrId>,
}

impl LineShape {
    pub fn k(&self) -> usize {
        self.edge_order.len()
    }
}

/// Recognize `⊕ R_1(A_1,A_2) ⋈ … ⋈ R_k(A_k,A_{k+1})` with outputs exactly
/// the two chain ends.
pub fn detect_line(q: &Query) -> Result<LineShape> {
    let err = |msg: &str| Error::NotLine(msg.into());
    let k = q.edge_count();
    if k < 2 {
        return Err(err("need at least two relations"));
    }
    for e in q.edges() {
        if e.attrs.len() != 2 {
            return Err(err("every relation must be binary"));
        }
    }
    let occurring = q.occurring_attrs();
    if occurring.len() != k + 1 {
        return Err(err("attribute count must be one more than relation count"));
    }
    let output = q.output().intersect(occurring);
    if output.len() != 2 {
        return Err(err("exactly the two chain ends must be output attributes"));
    }
    let degree = |a: AttrId| q.edges().iter().filter(|e| e.attrs.contains(a)).count();
    for a in occurring.iter() {
        let d = degree(a);
        let is_end = output.contains(a);
        if is_end && d != 1 {
            return Err(err("output attributes must be chain ends"));
        }
        if !is_end && d != 2 {
            return Err(err("interior attributes must join exactly two relations"));
        }
    }
    let start = output.iter().min().unwrap();
    let mut attr_chain = vec![start];
    let mut edge_order = Vec::new();
    let mut used = vec![false; q.edge_count()];
    let mut cur = start;
    for _ in 0..k {
        let (pos, e) = q
            .edges()
            .iter()
            .enumerate()
            .find(|(i, e)| !used[*i] && e.attrs.contains(cur))
            .ok_or_else(|| err("relations do not form a chain"))?;
        used[pos] = true;
        let next = e.attrs.minus(AttrSet::single(cur));
        let next = next.iter().next().unwrap();
        edge_order.push(e.id);
        attr_chain.push(next);
        cur = next;
    }
    if !q.output().contains(cur) {
        return Err(err("relations do not form a chain between the outputs"));
    }
    Ok(LineShape {
        edge_order,
        attr_chain,
    })
}

/// ⌈√n⌉ in integer arithmetic.
pub fn isqrt_ceil(n: u64) -> u64 {
    if n == 0 {
        return 0;
    }
    let mut r = (n as f64).sqrt() as u64;
    while r.checked_mul(r).is_none_or(|sq| sq < n) {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

/// Partition the active values of `attr` in `t` by degree: heavy when the
/// per-value row count exceeds `threshold`, light when in `1..=threshold`.
/// Values absent from `t` are in neither set.
pub fn classify_heavy<E: Clone>(
    t: &Relation<E>,
    attr: AttrId,
    threshold: u64,
) -> Result<(Vec<Value>, Vec<Value>)> {
    let counts = key_counts(t, &[attr])?;
    let mut heavy = Vec::new();
    let mut light = Vec::new();
    for (k, c) in counts {
        let v = k[0].clone();
        if c > threshold {
            heavy.push(v);
        } else {
            light.push(v);
        }
    }
    heavy.sort();
    light.sort();
    Ok((heavy, light))
}

fn keyset(attr: AttrId, values: &[Value]) -> KeySet {
    let mut ks = KeySet::new(vec![attr]);
    for v in values {
        ks.keys.insert(vec![v.clone()].into_boxed_slice());
    }
    ks
}

pub fn run_line<S: Semiring>(
    q: &Query,
    inst: &Instance<S::Elem>,
    ring: &S,
    out_guess: u64,
) -> Result<(ResultSet<S::Elem>, RunStats)> {
    let mut stats = RunStats::new();
    let rs = run_line_with_stats(q, inst, ring, out_guess, &mut stats)?;
    Ok((rs, stats))
}

/// The caller is responsible for removing dangling tuples first; results are
/// exact regardless of `out_guess`, which only steers routing and cost.
#[allow(clippy::needless_range_loop)] // the level index drives four arrays
pub fn run_line_with_stats<S: Semiring>(
    q: &Query,
    inst: &Instance<S::Elem>,
    ring: &S,
    out_guess: u64,
    stats: &mut RunStats,
) -> Result<ResultSet<S::Elem>> {
    let shape = detect_line(q)?;
    let k = shape.k();
    let a = &shape.attr_chain;
    let rel = |i: usize| inst.get(shape.edge_order[i]).expect("line relation");
    let threshold = isqrt_ceil(out_guess);

    let tree = gyo_join_tree(q).map_err(Error::Cyclic)?;
    let left_root = (0..tree.node_count())
        .find(|&u| tree.source_edge(u) == Some(shape.edge_order[0]))
        .ok_or_else(|| Error::Invariant("left end node missing".into()))?;

    let mut parts: Vec<ResultSet<S::Elem>> = Vec::new();
    let mut light_rels: Vec<Relation<S::Elem>> = Vec::new();

    // Stage I: sweep levels, classifying values of each interior attribute
    // and peeling off the heavy sub-instances.
    let mut t_cur: Relation<S::Elem> = rel(0).clone();
    let mut s_prev: Option<Relation<S::Elem>> = None;
    for i in 1..k {
        // t_cur is T_i over (A_1, A_{i+1}); classify values of a[i].
        let (heavy, light) = classify_heavy(&t_cur, a[i], threshold)?;
        let heavy_keys = keyset(a[i], &heavy);
        let light_keys = keyset(a[i], &light);
        let r_heavy = semi_join_keys(rel(i - 1), &heavy_keys, stats)?;
        let r_light = semi_join_keys(rel(i - 1), &light_keys, stats)?;
        let s_cur = semi_join_keys(&t_cur, &light_keys, stats)?;

        if !r_heavy.is_empty() {
            // Q_i: light prefix, heavy level i, untouched suffix; evaluated
            // with the plan rooted at the left end.
            let mut sub = Instance::new();
            for (j, lr) in light_rels.iter().enumerate() {
                sub.insert(shape.edge_order[j], lr.clone());
            }
            sub.insert(shape.edge_order[i - 1], r_heavy);
            for j in i..k {
                sub.insert(shape.edge_order[j], rel(j).clone());
            }
            let part = yannakakis_with_stats(q, &tree, left_root, &sub, ring, stats)?;
            parts.push(part);
        }
        light_rels.push(r_light);

        if i + 1 < k {
            let joined = join(&s_cur, rel(i), ring, stats)?;
            t_cur = project_aggregate(&joined, AttrSet::single(a[i]), ring, stats)?;
        }
        s_prev = Some(s_cur);
    }

    // Q_*: the all-light residue, finished from the right end.
    let s_last = s_prev.expect("k >= 2 guarantees at least one level");
    let joined = join(&s_last, rel(k - 1), ring, stats)?;
    let q_star = project_aggregate(&joined, AttrSet::single(a[k - 1]), ring, stats)?;
    parts.push(q_star.canonical());

    let parts: Vec<ResultSet<S::Elem>> = parts.into_iter().map(|p| p.canonical()).collect();
    let merged = merge_results(&parts, ring, stats)?;
    Ok(merged.canonical())
}

const KMV_SEED_BASE: u64 = 0x9e3779b97f4a7c15;

fn hash_value(v: &Value, seed: u64) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    h.write_u64(KMV_SEED_BASE ^ seed.wrapping_mul(0xff51afd7ed558ccd));
    v.hash(&mut h);
    h.finish()
}

/// Sorted list of the k smallest distinct hashes seen.
#[derive(Clone, Default)]
struct Kmv {
    vals: Vec<u64>,
}

impl Kmv {
    fn insert(&mut self, h: u64, k: usize) {
        match self.vals.binary_search(&h) {
            Ok(_) => {}
            Err(pos) => {
                if pos < k {
                    self.vals.insert(pos, h);
                    self.vals.truncate(k);
                }
            }
        }
    }
    fn merge_from(&mut self, other: &Kmv, k: usize) {
        for &h in &other.vals {
            self.insert(h, k);
        }
    }
    /// Distinct-count estimate: exact when the sketch never filled.
    fn estimate(&self, k: usize) -> f64 {
        if self.vals.len() < k {
            self.vals.len() as f64
        } else {
            let vk = (self.vals[k - 1] as f64 + 1.0) / (u64::MAX as f64 + 1.0);
            (k as f64 - 1.0) / vk
        }
    }
}

/// Estimate OUT for a line query: per left-end value, a KMV sketch of the
/// reachable right-end values, propagated right to left by sketch merging;
/// summed per trial, median over trials.
pub fn kmv_estimate_line<E: Clone>(
    q: &Query,
    inst: &Instance<E>,
    sketch_size: usize,
    trials: usize,
) -> Result<u64> {
    let shape = detect_line(q)?;
    let k = shape.k();
    let sketch_size = sketch_size.max(2);
    let trials = trials.max(1);
    let mut estimates = Vec::with_capacity(trials);
    for trial in 0..trials {
        let seed = trial as u64 + 1;
        // Sketches for the current level's values, keyed by value.
        let mut next: HashMap<Value, Kmv> = HashMap::new();
        for i in (0..k).rev() {
            let rel = inst.get(shape.edge_order[i]).expect("line relation");
            let schema = rel.schema();
            let lo = schema
                .iter()
                .position(|&x| x == shape.attr_chain[i])
                .expect("chain attr");
            let hi = schema
                .iter()
                .position(|&x| x == shape.attr_chain[i + 1])
                .expect("chain attr");
            let mut cur: HashMap<Value, Kmv> = HashMap::new();
            for (t, _) in rel.rows() {
                let left = &t[lo];
                let right = &t[hi];
                let entry = cur.entry(left.clone()).or_default();
                if i == k - 1 {
                    entry.insert(hash_value(right, seed), sketch_size);
                } else if let Some(s) = next.get(right) {
                    entry.merge_from(s, sketch_size);
                }
            }
            next = cur;
        }
        let total: f64 = next.values().map(|s| s.estimate(sketch_size)).sum();
        estimates.push(total);
    }
    estimates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(estimates[estimates.len() / 2].round() as u64)
}
