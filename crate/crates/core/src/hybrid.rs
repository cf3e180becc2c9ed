//! The hybrid evaluation engine for separated acyclic queries.
//!
//! The engine maintains a worklist of (labeled tree, sub-instance) tasks.
//! A directed tree edge `(u1, u2)` can be labeled:
//!
//! * `Small` — every cut-key of `R_{u1}` matches at most `OUT~^φ` rows of
//!   the side's sub-query result;
//! * `Large` — every such key matches more than `OUT~^φ` rows;
//! * `Limited` — the sub-query result has at most `OUT~^φ` distinct rows
//!   after aggregating the cut attributes away.
//!
//! A task whose tree has a leaf with a `Small` or `Limited` incoming edge is
//! evaluated outright by Yannakakis rooted at that leaf. Otherwise the
//! engine picks an unlabeled edge whose other incoming edges are already
//! small-like, computes that side's sub-query, and splits the instance into
//! heavy and light cut-keys, labeling the copies `Large` (with the reverse
//! edge `Limited`) and `Small`. Labels steer routing and cost only; results
//! are exact for any `out_guess`.

use std::collections::{BTreeMap, VecDeque};

use num_rational::Ratio;

use crate::decomposition::{separated_join_tree, split, JoinTree, NodeId, SubtreeView};
use crate::error::{Error, Result};
use crate::instance::{merge_results, node_relations, reduce_node_relations, Instance, ResultSet};
use crate::query::Query;
use crate::relation::{anti_semi_join, key_counts, semi_join_keys, KeySet, Relation};
use crate::semiring::Semiring;
use crate::stats::RunStats;
use crate::yannakakis::{eval_rooted, subtree_result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeLabel {
    Unlabeled,
    Small,
    Large,
    Limited,
}

impl EdgeLabel {
    /// Small-like labels satisfy the dispatch and edge-selection guards.
    pub fn is_small_like(self) -> bool {
        matches!(self, EdgeLabel::Small | EdgeLabel::Limited)
    }
}

/// Labels for every directed edge of a join tree.
#[derive(Debug, Clone, Default)]
pub struct LabelMap {
    labels: BTreeMap<(NodeId, NodeId), EdgeLabel>,
}

impl LabelMap {
    pub fn get(&self, from: NodeId, to: NodeId) -> EdgeLabel {
        self.labels
            .get(&(from, to))
            .copied()
            .unwrap_or(EdgeLabel::Unlabeled)
    }
    fn set(&mut self, from: NodeId, to: NodeId, label: EdgeLabel) {
        self.labels.insert((from, to), label);
    }
    pub fn iter(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &EdgeLabel)> {
        self.labels.iter()
    }
}

/// How a label came to be assigned, for traces and audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRule {
    SplitHeavy,
    SplitLight,
    LargeReverse,
    LimitedSaturation,
}

#[derive(Debug, Clone)]
pub enum TraceEvent {
    Label {
        from: NodeId,
        to: NodeId,
        label: EdgeLabel,
        rule: LabelRule,
    },
    Split {
        edge: (NodeId, NodeId),
        heavy_keys: usize,
    },
    Dispatch {
        root: NodeId,
        rows_out: u64,
    },
    /// A task whose reduced sub-instance is empty contributes nothing.
    PrunedEmpty,
}

impl TraceEvent {
    pub fn render(&self) -> String {
        match self {
            TraceEvent::Label {
                from,
                to,
                label,
                rule,
            } => format!("label ({from},{to}) {label:?} via {rule:?}"),
            TraceEvent::Split { edge, heavy_keys } => {
                format!("split ({},{}) heavy_keys={heavy_keys}", edge.0, edge.1)
            }
            TraceEvent::Dispatch { root, rows_out } => {
                format!("dispatch root={root} rows={rows_out}")
            }
            TraceEvent::PrunedEmpty => "pruned empty task".to_string(),
        }
    }
}

/// A label assignment snapshot for truthfulness audits: the labeled edge,
/// its φ, and the node relations of the task the label belongs to.
#[derive(Debug, Clone)]
pub struct LabelAudit<E> {
    pub edge: (NodeId, NodeId),
    pub label: EdgeLabel,
    pub rule: LabelRule,
    pub phi: Ratio<u64>,
    pub rels: BTreeMap<NodeId, Relation<E>>,
}

/// A split snapshot for partition-soundness audits.
#[derive(Debug, Clone)]
pub struct SplitAudit<E> {
    pub edge: (NodeId, NodeId),
    pub parent_rels: BTreeMap<NodeId, Relation<E>>,
    pub heavy_rels: BTreeMap<NodeId, Relation<E>>,
    pub light_rels: BTreeMap<NodeId, Relation<E>>,
}

#[derive(Debug, Clone, Default)]
pub struct HybridOptions {
    /// Capture per-split and per-label snapshots (desk scale only).
    pub audit: bool,
}

#[derive(Debug)]
pub struct HybridReport<E> {
    pub trace: Vec<TraceEvent>,
    pub label_audits: Vec<LabelAudit<E>>,
    pub split_audits: Vec<SplitAudit<E>>,
    pub finalized_tasks: u64,
    pub iterations: u64,
}

impl<E> Default for HybridReport<E> {
    fn default() -> Self {
        HybridReport {
            trace: Vec::new(),
            label_audits: Vec::new(),
            split_audits: Vec::new(),
            finalized_tasks: 0,
            iterations: 0,
        }
    }
}

/// One worklist entry: a labeled tree over a sub-instance of node relations.
#[derive(Debug, Clone)]
pub struct PartitionTask<E> {
    pub labels: LabelMap,
    pub rels: BTreeMap<NodeId, Relation<E>>,
}

/// Heavy-key threshold `OUT~^φ`.
pub fn phi_threshold(out_guess: u64, phi: Ratio<u64>) -> f64 {
    (out_guess as f64).powf(*phi.numer() as f64 / *phi.denom() as f64)
}

/// The heavy-key predicate `count > OUT~^φ`, with enough slack that exact
/// powers stay on the light side despite floating-point rounding. Engine
/// and audits share this single definition.
pub fn is_heavy_count(count: u64, out_guess: u64, phi: Ratio<u64>) -> bool {
    count as f64 > phi_threshold(out_guess, phi) * (1.0 + 1e-9) + 1e-9
}

/// Apply the limited-saturation rule to fixpoint: an unlabeled edge
/// `(u1, u2)` becomes `Limited` when every other incoming edge of `u1` is
/// `Limited`. Leaves (no other incoming edges) are exempt; their edges are
/// handled by splitting. Existing labels are never downgraded.
pub fn saturate_limited(
    t: &JoinTree,
    labels: &LabelMap,
    mut on_label: impl FnMut(NodeId, NodeId),
) -> LabelMap {
    let mut out = labels.clone();
    loop {
        let mut changed = false;
        for (u1, u2) in directed_edges(t) {
            if out.get(u1, u2) != EdgeLabel::Unlabeled {
                continue;
            }
            let others: Vec<NodeId> = t
                .neighbors(u1)
                .iter()
                .copied()
                .filter(|&u3| u3 != u2)
                .collect();
            if others.is_empty() {
                continue;
            }
            if others
                .iter()
                .all(|&u3| out.get(u3, u1) == EdgeLabel::Limited)
            {
                out.set(u1, u2, EdgeLabel::Limited);
                on_label(u1, u2);
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}

/// A `Large` edge forces its reverse to `Limited`; upgrades `Small`, never
/// touches an already-`Limited` reverse.
pub fn large_reverse(labels: &mut LabelMap, u1: NodeId, u2: NodeId) -> bool {
    debug_assert_eq!(labels.get(u1, u2), EdgeLabel::Large);
    match labels.get(u2, u1) {
        EdgeLabel::Limited => false,
        EdgeLabel::Large => panic!("opposite edges cannot both be large"),
        _ => {
            labels.set(u2, u1, EdgeLabel::Limited);
            true
        }
    }
}

/// The dispatch condition: the lowest-id leaf whose incoming edge is
/// small-like, if any.
pub fn check_optimal(t: &JoinTree, labels: &LabelMap) -> Option<NodeId> {
    if t.node_count() == 1 {
        return Some(0);
    }
    t.leaves()
        .into_iter()
        .find(|&u| labels.get(t.neighbors(u)[0], u).is_small_like())
}

/// Diagnostic leaf finder: when no further labeling applies, walk the tree
/// pruning subtrees that hang off a `Large` edge with all-`Small` interiors;
/// the surviving root is a leaf satisfying the dispatch condition.
pub fn identify_leaf(t: &JoinTree, labels: &LabelMap) -> Result<NodeId> {
    let mut live: Vec<NodeId> = (0..t.node_count()).collect();
    let tree_leaves = t.leaves();
    loop {
        if live.len() == 1 {
            return Ok(live[0]);
        }
        let root = *live
            .iter()
            .find(|u| tree_leaves.contains(u))
            .ok_or_else(|| Error::Invariant("no output leaf left while identifying".into()))?;
        let (order, parent) = t.rooted_order_within(root, Some(&live));
        let mut pruned = false;
        for &u in &order {
            let Some(p) = parent[u] else { continue };
            if labels.get(u, p) != EdgeLabel::Large {
                continue;
            }
            // Interior edges of the subtree rooted at u must all be small.
            let subtree: Vec<NodeId> = order
                .iter()
                .copied()
                .filter(|&v| {
                    let mut cur = v;
                    loop {
                        if cur == u {
                            return true;
                        }
                        match parent[cur] {
                            Some(c) => cur = c,
                            None => return false,
                        }
                    }
                })
                .collect();
            let all_small = subtree.iter().all(|&v| {
                v == u || parent[v].is_none_or(|pv| labels.get(v, pv) == EdgeLabel::Small)
            });
            if all_small {
                live.retain(|v| !subtree.contains(v));
                pruned = true;
                break;
            }
        }
        if !pruned {
            return Ok(root);
        }
    }
}

fn directed_edges(t: &JoinTree) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for (u, v) in t.tree_edges() {
        out.push((u, v));
        out.push((v, u));
    }
    out.sort_unstable();
    out
}

pub fn hybrid_yannakakis<S: Semiring>(
    q: &Query,
    inst: &Instance<S::Elem>,
    ring: &S,
    out_guess: u64,
) -> Result<(ResultSet<S::Elem>, RunStats)> {
    let mut stats = RunStats::new();
    let (rs, _) = hybrid_with_options(
        q,
        inst,
        ring,
        out_guess,
        &HybridOptions::default(),
        &mut stats,
    )?;
    Ok((rs, stats))
}

#[allow(clippy::type_complexity)]
pub fn hybrid_with_options<S: Semiring>(
    q: &Query,
    inst: &Instance<S::Elem>,
    ring: &S,
    out_guess: u64,
    opts: &HybridOptions,
    stats: &mut RunStats,
) -> Result<(ResultSet<S::Elem>, HybridReport<S::Elem>)> {
    let mut report = HybridReport::default();
    let tree = separated_join_tree(q)?;
    let fnfhtw = tree.leaves().len() as u64;

    let mut rels = node_relations(q, &tree, inst, ring, stats)?;
    reduce_node_relations(&tree, &mut rels, 0, None, stats)?;

    if tree.node_count() == 1 {
        let only = rels.remove(&0).expect("single node relation");
        let drop = only.schema_set().minus(q.output());
        let rs = crate::relation::project_aggregate(&only, drop, ring, stats)?;
        report.finalized_tasks = 1;
        report.iterations = 1;
        return Ok((rs.canonical(), report));
    }

    // Per-directed-edge subtree views, φ included.
    let mut views: BTreeMap<(NodeId, NodeId), SubtreeView> = BTreeMap::new();
    for (u, v) in tree.tree_edges() {
        let (a, b) = split(&tree, u, v, fnfhtw)?;
        views.insert((u, v), a);
        views.insert((v, u), b);
    }

    // Every split consumes one unlabeled directed edge along its lineage,
    // so task lineages have depth at most 2·(node count - 1) and the task
    // tree has at most 2^(2·edges + 1) entries.
    let iteration_limit = 1u64
        .checked_shl((2 * tree.tree_edges().len() + 1).min(40) as u32)
        .unwrap_or(u64::MAX)
        .saturating_add(1);

    let mut worklist: VecDeque<PartitionTask<S::Elem>> = VecDeque::new();
    worklist.push_back(PartitionTask {
        labels: LabelMap::default(),
        rels,
    });
    let mut parts: Vec<ResultSet<S::Elem>> = Vec::new();

    while let Some(mut task) = worklist.pop_front() {
        report.iterations += 1;
        if report.iterations > iteration_limit {
            return Err(Error::Invariant(format!(
                "hybrid worklist exceeded {iteration_limit} iterations"
            )));
        }

        // Tasks are kept fully reduced, so one empty relation means the
        // whole sub-result is empty; the progress guarantee behind edge
        // selection only covers non-empty sub-instances.
        if task.rels.values().any(|r| r.is_empty()) {
            report.trace.push(TraceEvent::PrunedEmpty);
            report.finalized_tasks += 1;
            continue;
        }

        // Limited-saturation to fixpoint on this task.
        let mut saturated_edges = Vec::new();
        task.labels = saturate_limited(&tree, &task.labels, |u1, u2| {
            saturated_edges.push((u1, u2));
        });
        for (u1, u2) in saturated_edges {
            report.trace.push(TraceEvent::Label {
                from: u1,
                to: u2,
                label: EdgeLabel::Limited,
                rule: LabelRule::LimitedSaturation,
            });
            if opts.audit {
                report.label_audits.push(LabelAudit {
                    edge: (u1, u2),
                    label: EdgeLabel::Limited,
                    rule: LabelRule::LimitedSaturation,
                    phi: views[&(u1, u2)].phi,
                    rels: task.rels.clone(),
                });
            }
        }

        // Dispatch when a leaf's incoming edge is small-like.
        if let Some(leaf) = check_optimal(&tree, &task.labels) {
            let rs = eval_rooted(&tree, &task.rels, None, leaf, q.output(), ring, stats)?;
            let rs = rs.canonical();
            report.trace.push(TraceEvent::Dispatch {
                root: leaf,
                rows_out: rs.len() as u64,
            });
            report.finalized_tasks += 1;
            parts.push(rs);
            continue;
        }

        // Pick an unlabeled edge whose other incoming edges are small-like,
        // preferring the smallest subtree.
        let mut candidates: Vec<(usize, NodeId, NodeId)> = Vec::new();
        for (u1, u2) in directed_edges(&tree) {
            if task.labels.get(u1, u2) != EdgeLabel::Unlabeled {
                continue;
            }
            let ok = tree
                .neighbors(u1)
                .iter()
                .all(|&u3| u3 == u2 || task.labels.get(u3, u1).is_small_like());
            if ok {
                candidates.push((views[&(u1, u2)].nodes.len(), u1, u2));
            }
        }
        candidates.sort_unstable();
        let Some(&(_, u1, u2)) = candidates.first() else {
            return Err(Error::Invariant(
                "no labelable edge although the dispatch condition fails".into(),
            ));
        };

        let view = &views[&(u1, u2)];
        let side = subtree_result(q, &tree, view, &task.rels, ring, stats)?;
        let cut: Vec<_> = tree.bag(u1).intersect(tree.bag(u2)).iter().collect();
        let mut heavy = KeySet::new(cut.clone());
        for (key, count) in key_counts(&side, &cut)? {
            if is_heavy_count(count, out_guess, view.phi) {
                heavy.keys.insert(key);
            }
        }
        report.trace.push(TraceEvent::Split {
            edge: (u1, u2),
            heavy_keys: heavy.len(),
        });

        let make_child = |filtered: Relation<S::Elem>,
                          stats: &mut RunStats|
         -> Result<BTreeMap<NodeId, Relation<S::Elem>>> {
            let mut rels = task.rels.clone();
            rels.insert(u1, filtered);
            reduce_node_relations(&tree, &mut rels, u1, None, stats)?;
            Ok(rels)
        };

        let heavy_rels = make_child(semi_join_keys(&task.rels[&u1], &heavy, stats)?, stats)?;
        let light_rels = make_child(anti_semi_join(&task.rels[&u1], &heavy, stats)?, stats)?;

        let mut heavy_labels = task.labels.clone();
        heavy_labels.set(u1, u2, EdgeLabel::Large);
        report.trace.push(TraceEvent::Label {
            from: u1,
            to: u2,
            label: EdgeLabel::Large,
            rule: LabelRule::SplitHeavy,
        });
        let reversed = large_reverse(&mut heavy_labels, u1, u2);
        if reversed {
            report.trace.push(TraceEvent::Label {
                from: u2,
                to: u1,
                label: EdgeLabel::Limited,
                rule: LabelRule::LargeReverse,
            });
        }
        let mut light_labels = task.labels.clone();
        light_labels.set(u1, u2, EdgeLabel::Small);
        report.trace.push(TraceEvent::Label {
            from: u1,
            to: u2,
            label: EdgeLabel::Small,
            rule: LabelRule::SplitLight,
        });

        if opts.audit {
            report.split_audits.push(SplitAudit {
                edge: (u1, u2),
                parent_rels: task.rels.clone(),
                heavy_rels: heavy_rels.clone(),
                light_rels: light_rels.clone(),
            });
            report.label_audits.push(LabelAudit {
                edge: (u1, u2),
                label: EdgeLabel::Large,
                rule: LabelRule::SplitHeavy,
                phi: view.phi,
                rels: heavy_rels.clone(),
            });
            if reversed {
                report.label_audits.push(LabelAudit {
                    edge: (u2, u1),
                    label: EdgeLabel::Limited,
                    rule: LabelRule::LargeReverse,
                    phi: views[&(u2, u1)].phi,
                    rels: heavy_rels.clone(),
                });
            }
            report.label_audits.push(LabelAudit {
                edge: (u1, u2),
                label: EdgeLabel::Small,
                rule: LabelRule::SplitLight,
                phi: view.phi,
                rels: light_rels.clone(),
            });
        }

        worklist.push_back(PartitionTask {
            labels: heavy_labels,
            rels: heavy_rels,
        });
        worklist.push_back(PartitionTask {
            labels: light_labels,
            rels: light_rels,
        });
    }

    let parts_canon: Vec<ResultSet<S::Elem>> = parts.into_iter().collect();
    let merged = if parts_canon.is_empty() {
        Relation::empty(q.output().iter().collect())
    } else {
        merge_results(&parts_canon, ring, stats)?
    };
    Ok((merged.canonical(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::brute_force;
    use crate::relation::tuple_of;
    use crate::semiring::Counting;

    fn mk(schema: Vec<usize>, rows: &[(&[i64], u64)]) -> Relation<u64> {
        Relation::from_rows(
            schema,
            rows.iter().map(|(t, w)| (tuple_of(t), *w)).collect(),
            &Counting,
        )
        .unwrap()
    }

    fn star2_instance(_q: &Query) -> Instance<u64> {
        let mut inst = Instance::new();
        // A1 side has a heavy hub value and a light one.
        inst.insert(
            0,
            mk(
                vec![0, 2],
                &[(&[1, 1], 1), (&[2, 1], 1), (&[3, 1], 1), (&[4, 2], 1)],
            ),
        );
        inst.insert(1, mk(vec![1, 2], &[(&[7, 1], 1), (&[8, 2], 1)]));
        inst
    }

    use crate::query::Query;

    #[test]
    fn star_matches_oracle_for_any_guess() {
        let q = crate::fixtures::star_query(2);
        let inst = star2_instance(&q);
        let oracle = brute_force(&q, &inst, &Counting).unwrap();
        for guess in [0, 1, 2, 4, 100] {
            let (rs, _) = hybrid_yannakakis(&q, &inst, &Counting, guess).unwrap();
            assert_eq!(rs.rows(), oracle.rows(), "guess {guess}");
        }
    }

    #[test]
    fn rejects_non_separated() {
        let q = crate::fixtures::branched_query();
        let inst = Instance::<u64>::new();
        assert!(matches!(
            hybrid_yannakakis(&q, &inst, &Counting, 4),
            Err(Error::NotSeparated(_))
        ));
    }

    #[test]
    fn single_relation_degenerates_to_aggregation() {
        let q = Query::new(&["A", "B"], &[("R", &["A", "B"])], &["A"]).unwrap();
        // Not separated (B unique non-output); but with both attrs output it is.
        let q2 = Query::new(&["A", "B"], &[("R", &["A", "B"])], &["A", "B"]).unwrap();
        assert!(!q.is_separated());
        let mut inst = Instance::new();
        inst.insert(0, mk(vec![0, 1], &[(&[1, 2], 3), (&[1, 3], 4)]));
        let (rs, _) = hybrid_yannakakis(&q2, &inst, &Counting, 1).unwrap();
        assert_eq!(rs.len(), 2);
    }

    #[test]
    fn saturation_and_large_reverse_rules() {
        let q = crate::fixtures::separated_branched_query();
        let t = separated_join_tree(&q).unwrap();
        // Nodes: 0 and 1 are the skeleton; leaves 2..=5 are R1..R4.
        let mut labels = LabelMap::default();
        // All leaf-incoming edges limited on the u6 side: (3,1) is R2's...
        // label (4,1) and (5,1) limited: then (1,0) must saturate.
        labels.set(4, 1, EdgeLabel::Limited);
        labels.set(5, 1, EdgeLabel::Limited);
        let sat = saturate_limited(&t, &labels, |_, _| {});
        assert_eq!(sat.get(1, 0), EdgeLabel::Limited);
        // Leaf edges are exempt from vacuous saturation.
        assert_eq!(sat.get(2, 0), EdgeLabel::Unlabeled);

        let mut labels = LabelMap::default();
        labels.set(2, 0, EdgeLabel::Large);
        assert!(large_reverse(&mut labels, 2, 0));
        assert_eq!(labels.get(0, 2), EdgeLabel::Limited);
        // Idempotent on an already-limited reverse.
        assert!(!large_reverse(&mut labels, 2, 0));
    }

    #[test]
    fn check_optimal_prefers_lowest_leaf() {
        let q = crate::fixtures::separated_branched_query();
        let t = separated_join_tree(&q).unwrap();
        let mut labels = LabelMap::default();
        assert_eq!(check_optimal(&t, &labels), None);
        labels.set(1, 5, EdgeLabel::Limited);
        labels.set(0, 2, EdgeLabel::Small);
        assert_eq!(check_optimal(&t, &labels), Some(2));
    }

    #[test]
    fn identify_leaf_cases() {
        let q = crate::fixtures::separated_branched_query();
        let t = separated_join_tree(&q).unwrap();
        // Fully small tree: returns the chosen root, a leaf.
        let mut labels = LabelMap::default();
        for (u, v) in t.tree_edges() {
            labels.set(u, v, EdgeLabel::Small);
            labels.set(v, u, EdgeLabel::Small);
        }
        let leaf = identify_leaf(&t, &labels).unwrap();
        assert!(t.is_leaf(leaf));
        // One large leaf edge with small interior prunes that subtree.
        labels.set(0, 1, EdgeLabel::Large);
        let leaf = identify_leaf(&t, &labels).unwrap();
        assert!(t.is_leaf(leaf));
    }
}
