//! The classic Yannakakis algorithm over a rooted width-1 join tree, plus
//! the restricted variant that evaluates one subtree of a split tree. Both
//! are reused as primitives by the line and hybrid engines.
//!
//! Phases: derived relations, bottom-up semi-joins, top-down semi-joins,
//! bottom-up pairwise join-aggregation toward the root, final aggregation at
//! the root. The semi-join passes always run; they are idempotent and O(N).

use std::collections::BTreeMap;

use crate::decomposition::{subquery_of_subtree, JoinTree, NodeId, SubtreeView};
use crate::error::{Error, Result};
use crate::instance::{node_relations, reduce_node_relations, Instance, ResultSet};
use crate::query::{AttrSet, Query};
use crate::relation::{join, project_aggregate, Relation};
use crate::semiring::Semiring;
use crate::stats::RunStats;

/// Evaluate node relations along the tree rooted at `root`, keeping exactly
/// the attributes in `keep` in the final result. `within` restricts the walk
/// to a connected node subset (the whole tree when `None`).
pub(crate) fn eval_rooted<S: Semiring>(
    t: &JoinTree,
    rels: &BTreeMap<NodeId, Relation<S::Elem>>,
    within: Option<&[NodeId]>,
    root: NodeId,
    keep: AttrSet,
    ring: &S,
    stats: &mut RunStats,
) -> Result<Relation<S::Elem>> {
    let mut work: BTreeMap<NodeId, Relation<S::Elem>> = match within {
        None => rels.clone(),
        Some(nodes) => nodes.iter().map(|u| (*u, rels[u].clone())).collect(),
    };
    reduce_node_relations(t, &mut work, root, within, stats)?;

    let (order, parent) = t.rooted_order_within(root, within);
    for &u in &order {
        let Some(p) = parent[u] else { continue };
        let r_u = work.remove(&u).expect("node relation present");
        let drop = r_u.schema_set().minus(t.bag(p)).minus(keep);
        let aggregated = project_aggregate(&r_u, drop, ring, stats)?;
        let joined = join(&work[&p], &aggregated, ring, stats)?;
        work.insert(p, joined);
    }
    let r_root = work.remove(&root).expect("root relation present");
    let drop = r_root.schema_set().minus(keep);
    project_aggregate(&r_root, drop, ring, stats)
}

/// Classic Yannakakis: exact `Q(inst)` over the width-1 tree `t` rooted at
/// `root`. Returns the result in canonical order together with run stats.
pub fn yannakakis<S: Semiring>(
    q: &Query,
    t: &JoinTree,
    root: NodeId,
    inst: &Instance<S::Elem>,
    ring: &S,
) -> Result<(ResultSet<S::Elem>, RunStats)> {
    let mut stats = RunStats::new();
    let rs = yannakakis_with_stats(q, t, root, inst, ring, &mut stats)?;
    Ok((rs, stats))
}

pub fn yannakakis_with_stats<S: Semiring>(
    q: &Query,
    t: &JoinTree,
    root: NodeId,
    inst: &Instance<S::Elem>,
    ring: &S,
    stats: &mut RunStats,
) -> Result<ResultSet<S::Elem>> {
    t.validate(q)?;
    if root >= t.node_count() {
        return Err(Error::Invariant(format!("root {root} out of range")));
    }
    inst.validate_against(q)?;
    let rels = node_relations(q, t, inst, ring, stats)?;
    let rs = eval_rooted(t, &rels, None, root, q.output(), ring, stats)?;
    Ok(rs.canonical())
}

/// Evaluate the sub-query of one side of a split tree, rooted at the cut
/// node, keeping that side's output attributes plus the cut attributes.
pub fn yannakakis_subquery<S: Semiring>(
    q: &Query,
    t: &JoinTree,
    view: &SubtreeView,
    inst: &Instance<S::Elem>,
    ring: &S,
    stats: &mut RunStats,
) -> Result<Relation<S::Elem>> {
    let rels = node_relations(q, t, inst, ring, stats)?;
    subtree_result(q, t, view, &rels, ring, stats)
}

/// Same as [`yannakakis_subquery`] but over already-derived node relations.
pub(crate) fn subtree_result<S: Semiring>(
    q: &Query,
    t: &JoinTree,
    view: &SubtreeView,
    rels: &BTreeMap<NodeId, Relation<S::Elem>>,
    ring: &S,
    stats: &mut RunStats,
) -> Result<Relation<S::Elem>> {
    let keep = subquery_of_subtree(t, view, q).output();
    let rs = eval_rooted(t, rels, Some(&view.nodes), view.cut.0, keep, ring, stats)?;
    Ok(rs.canonical())
}
