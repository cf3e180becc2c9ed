//! Reference evaluator: direct backtracking enumeration of the full join,
//! ⊗ along the way, ⊕ into output groups. Deliberately independent of the
//! tree-based engines; it is the ground truth they are tested against.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::instance::{Instance, ResultSet};
use crate::query::{AttrId, AttrSet, Query};
use crate::relation::{Relation, Tuple, Value};
use crate::semiring::Semiring;
use crate::width::rho_star_acyclic;

const MAX_PRODUCT_BOUND: f64 = 1e7;
const MAX_STEPS: u64 = 2e8 as u64;

/// Exact `Q(R)` by enumeration over relations in edge-id order.
///
/// Guarded: refuses when the cover-product bound on the full join exceeds
/// desk scale, and aborts if the enumeration walks too many steps.
pub fn brute_force<S: Semiring>(
    q: &Query,
    inst: &Instance<S::Elem>,
    ring: &S,
) -> Result<ResultSet<S::Elem>> {
    inst.validate_against(q)?;

    // AGM-style guard: product of relation sizes over an integral cover of
    // all attributes (falling back to all edges if the greedy stalls).
    let cover = rho_star_acyclic(q, q.occurring_attrs())
        .map(|(_, c)| c)
        .unwrap_or_else(|_| q.edges().iter().map(|e| e.id).collect());
    let mut bound = 1f64;
    for id in &cover {
        bound *= inst.get(*id).map(|r| r.len().max(1) as f64).unwrap_or(1.0);
    }
    if bound > MAX_PRODUCT_BOUND {
        return Err(Error::InfeasibleParams(format!(
            "brute force refused: estimated join bound {bound:.3e} rows"
        )));
    }

    let mut edges: Vec<_> = q.edges().to_vec();
    edges.sort_by_key(|e| e.id);

    // Per relation: attributes already bound by earlier relations, the rest,
    // and a hash index on the bound part.
    struct Level {
        bound_attrs: Vec<AttrId>,
        free_attrs: Vec<AttrId>,
        index: HashMap<Tuple, Vec<usize>>,
        rows: Vec<(Tuple, Vec<(AttrId, Value)>)>,
    }
    let mut seen = AttrSet::EMPTY;
    let mut levels = Vec::with_capacity(edges.len());
    for e in &edges {
        let bound_attrs: Vec<AttrId> = e.attrs.intersect(seen).iter().collect();
        let free_attrs: Vec<AttrId> = e.attrs.minus(seen).iter().collect();
        let rel = inst.get(e.id).unwrap();
        let schema = rel.schema().to_vec();
        let pos_of = |a: AttrId| schema.iter().position(|&x| x == a).unwrap();
        let bound_pos: Vec<usize> = bound_attrs.iter().map(|&a| pos_of(a)).collect();
        let free_pos: Vec<usize> = free_attrs.iter().map(|&a| pos_of(a)).collect();
        let mut index: HashMap<Tuple, Vec<usize>> = HashMap::new();
        let mut rows = Vec::with_capacity(rel.len());
        for (i, (t, _)) in rel.rows().iter().enumerate() {
            let key: Tuple = bound_pos.iter().map(|&p| t[p].clone()).collect();
            index.entry(key).or_default().push(i);
            rows.push((
                t.clone(),
                free_pos
                    .iter()
                    .zip(&free_attrs)
                    .map(|(&p, &a)| (a, t[p].clone()))
                    .collect(),
            ));
        }
        levels.push(Level {
            bound_attrs,
            free_attrs: free_attrs.clone(),
            index,
            rows,
        });
        seen = seen.union(e.attrs);
    }

    let y: Vec<AttrId> = q.output().intersect(q.occurring_attrs()).iter().collect();
    let mut assignment: Vec<Option<Value>> = vec![None; q.attr_count()];
    let mut groups: HashMap<Tuple, S::Elem> = HashMap::new();
    let mut steps: u64 = 0;

    // Depth-first over relations; weights multiply down the branch.
    #[allow(clippy::too_many_arguments)]
    fn descend<S: Semiring>(
        depth: usize,
        levels: &[Level],
        rels: &[&Relation<S::Elem>],
        assignment: &mut Vec<Option<Value>>,
        acc: &S::Elem,
        y: &[AttrId],
        groups: &mut HashMap<Tuple, S::Elem>,
        ring: &S,
        steps: &mut u64,
    ) -> Result<()> {
        *steps += 1;
        if *steps > MAX_STEPS {
            return Err(Error::InfeasibleParams(
                "brute force exceeded its step limit".into(),
            ));
        }
        if depth == levels.len() {
            let key: Tuple = y
                .iter()
                .map(|&a| assignment[a].clone().expect("output attribute bound"))
                .collect();
            match groups.get_mut(&key) {
                Some(w) => *w = ring.plus(w, acc),
                None => {
                    groups.insert(key, acc.clone());
                }
            }
            return Ok(());
        }
        let level = &levels[depth];
        let key: Tuple = level
            .bound_attrs
            .iter()
            .map(|&a| assignment[a].clone().expect("bound attribute set"))
            .collect();
        let Some(matches) = level.index.get(&key) else {
            return Ok(());
        };
        for &ri in matches {
            *steps += 1;
            if *steps > MAX_STEPS {
                return Err(Error::InfeasibleParams(
                    "brute force exceeded its step limit".into(),
                ));
            }
            let (_, ref frees) = level.rows[ri];
            for (a, v) in frees {
                assignment[*a] = Some(v.clone());
            }
            let w = ring.times(acc, &rels[depth].rows()[ri].1);
            descend(
                depth + 1,
                levels,
                rels,
                assignment,
                &w,
                y,
                groups,
                ring,
                steps,
            )?;
            for &a in &level.free_attrs {
                assignment[a] = None;
            }
        }
        Ok(())
    }

    let rels: Vec<&Relation<S::Elem>> = edges.iter().map(|e| inst.get(e.id).unwrap()).collect();
    let one = ring.one();
    descend(
        0,
        &levels,
        &rels,
        &mut assignment,
        &one,
        &y,
        &mut groups,
        ring,
        &mut steps,
    )?;

    let mut rows: Vec<(Tuple, S::Elem)> = groups.into_iter().collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = Relation::empty(y);
    for (t, w) in rows {
        out.push_row(t, w);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::tuple_of;
    use crate::semiring::Counting;

    #[test]
    fn matrix_mult_count() {
        // R1 = {(a,b1),(a,b2)}, R2 = {(b1,c),(b2,c)}, all weight 1: the pair
        // (a,c) is reachable along two paths.
        let q = crate::fixtures::line_query(2);
        let mk = |schema: Vec<usize>, rows: &[&[i64]]| {
            Relation::from_rows(
                schema,
                rows.iter().map(|t| (tuple_of(t), 1u64)).collect(),
                &Counting,
            )
            .unwrap()
        };
        let mut inst = Instance::new();
        inst.insert(0, mk(vec![0, 1], &[&[0, 1], &[0, 2]]));
        inst.insert(1, mk(vec![1, 2], &[&[1, 7], &[2, 7]]));
        let rs = brute_force(&q, &inst, &Counting).unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs.rows()[0].0.as_ref(), tuple_of(&[0, 7]).as_ref());
        assert_eq!(rs.rows()[0].1, 2);
    }

    #[test]
    fn empty_relation_gives_empty_result() {
        let q = crate::fixtures::line_query(2);
        let mut inst = Instance::new();
        inst.insert(
            0,
            Relation::from_rows(vec![0, 1], vec![(tuple_of(&[1, 2]), 1u64)], &Counting).unwrap(),
        );
        inst.insert(1, Relation::empty(vec![1, 2]));
        assert!(brute_force(&q, &inst, &Counting).unwrap().is_empty());
    }
}
