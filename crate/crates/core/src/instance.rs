//! Instances (relations keyed by hyperedge), derived relations for join
//! trees, the full reducer, and result merging.

use std::collections::BTreeMap;

use crate::decomposition::{JoinTree, NodeId};
use crate::error::{Error, Result};
use crate::query::{EdgeId, Query};
use crate::relation::{join, project_distinct, semi_join, Relation};
use crate::semiring::Semiring;
use crate::stats::RunStats;

/// Query result: one row per distinct output tuple, annotations aggregated.
/// `OUT` is the row count.
pub type ResultSet<E> = Relation<E>;

#[derive(Debug, Clone)]
pub struct Instance<E> {
    relations: BTreeMap<EdgeId, Relation<E>>,
}

impl<E: Clone> Default for Instance<E> {
    fn default() -> Self {
        Instance {
            relations: BTreeMap::new(),
        }
    }
}

impl<E: Clone> Instance<E> {
    pub fn new() -> Instance<E> {
        Instance::default()
    }

    pub fn insert(&mut self, edge: EdgeId, rel: Relation<E>) {
        self.relations.insert(edge, rel);
    }

    pub fn get(&self, edge: EdgeId) -> Option<&Relation<E>> {
        self.relations.get(&edge)
    }

    pub fn remove(&mut self, edge: EdgeId) -> Option<Relation<E>> {
        self.relations.remove(&edge)
    }

    pub fn relations(&self) -> impl Iterator<Item = (EdgeId, &Relation<E>)> {
        self.relations.iter().map(|(&e, r)| (e, r))
    }

    /// Total input size N = Σ |R_e|.
    pub fn input_size(&self) -> u64 {
        self.relations.values().map(|r| r.len() as u64).sum()
    }

    /// Restrict to the given edges (for ∃-component evaluation).
    pub fn restrict(&self, edges: &[EdgeId]) -> Instance<E> {
        Instance {
            relations: self
                .relations
                .iter()
                .filter(|(e, _)| edges.contains(e))
                .map(|(&e, r)| (e, r.clone()))
                .collect(),
        }
    }

    /// Check every relation's schema matches its edge's attribute set.
    pub fn validate_against(&self, q: &Query) -> Result<()> {
        for e in q.edges() {
            let rel = self.relations.get(&e.id).ok_or_else(|| {
                Error::SchemaMismatch(format!("no data for relation `{}`", e.name))
            })?;
            if rel.schema_set() != e.attrs {
                return Err(Error::SchemaMismatch(format!(
                    "relation `{}` columns do not match its declared attributes",
                    e.name
                )));
            }
        }
        for &id in self.relations.keys() {
            if q.edge(id).is_none() {
                return Err(Error::SchemaMismatch(format!(
                    "instance contains data for unknown edge id {id}"
                )));
            }
        }
        Ok(())
    }
}

/// Derived relation for one tree node: the edge's relation when the bag is
/// edge-backed, otherwise the intersection of projections with annotation
/// `one`. Does not absorb other edges homed at the node; see
/// [`node_relations`] for the evaluation-ready variant.
pub fn derived_relation<S: Semiring>(
    q: &Query,
    t: &JoinTree,
    inst: &Instance<S::Elem>,
    u: NodeId,
    ring: &S,
    stats: &mut RunStats,
) -> Result<Relation<S::Elem>> {
    let bag = t.bag(u);
    if let Some(e) = t.source_edge(u) {
        return Ok(inst
            .get(e)
            .ok_or_else(|| Error::SchemaMismatch(format!("missing relation for edge {e}")))?
            .clone());
    }
    // Intersection of the bag-projections of all overlapping relations.
    let mut acc: Option<Relation<S::Elem>> = None;
    for e in q.edges() {
        let overlap = e.attrs.intersect(bag);
        if overlap.is_empty() {
            continue;
        }
        let rel = inst
            .get(e.id)
            .ok_or_else(|| Error::SchemaMismatch(format!("missing relation `{}`", e.name)))?;
        let proj = project_distinct(rel, overlap, ring, stats)?;
        acc = Some(match acc {
            None => proj,
            Some(prev) => {
                let joined = join(&prev, &proj, ring, stats)?;
                project_distinct(&joined, bag, ring, stats)?
            }
        });
    }
    match acc {
        Some(r) => Ok(r),
        None => {
            // Empty bag: the single empty tuple with annotation one.
            let mut r = Relation::empty(Vec::new());
            r.push_row(Vec::new().into_boxed_slice(), ring.one());
            Ok(r)
        }
    }
}

/// Evaluation-ready node relations: the derived relation per node, with every
/// other edge homed at the node joined in (absorbing duplicate and contained
/// relations exactly once, multiplying annotations).
pub fn node_relations<S: Semiring>(
    q: &Query,
    t: &JoinTree,
    inst: &Instance<S::Elem>,
    ring: &S,
    stats: &mut RunStats,
) -> Result<BTreeMap<NodeId, Relation<S::Elem>>> {
    let mut out = BTreeMap::new();
    for u in 0..t.node_count() {
        out.insert(u, derived_relation(q, t, inst, u, ring, stats)?);
    }
    for e in q.edges() {
        let home = t
            .edge_home(e.id)
            .ok_or_else(|| Error::Invariant(format!("edge `{}` has no home node", e.name)))?;
        if t.source_edge(home) == Some(e.id) {
            continue; // already the node's base relation
        }
        let rel = inst
            .get(e.id)
            .ok_or_else(|| Error::SchemaMismatch(format!("missing relation `{}`", e.name)))?;
        let merged = join(&out[&home], rel, ring, stats)?;
        out.insert(home, merged);
    }
    Ok(out)
}

/// Semi-join passes over node relations: bottom-up then top-down. After the
/// passes every surviving node row participates in a full join of the node
/// relations.
pub fn reduce_node_relations<E: Clone>(
    t: &JoinTree,
    rels: &mut BTreeMap<NodeId, Relation<E>>,
    root: NodeId,
    within: Option<&[NodeId]>,
    stats: &mut RunStats,
) -> Result<()> {
    let (order, parent) = t.rooted_order_within(root, within);
    for &u in &order {
        if let Some(p) = parent[u] {
            let filtered = semi_join(&rels[&p], &rels[&u], stats)?;
            rels.insert(p, filtered);
        }
    }
    for &u in order.iter().rev() {
        if let Some(p) = parent[u] {
            let filtered = semi_join(&rels[&u], &rels[&p], stats)?;
            rels.insert(u, filtered);
        }
    }
    Ok(())
}

/// Remove dangling tuples from an instance: tuples that participate in no
/// full join result. Runs the semi-join passes over the derived node
/// relations of `t`, then filters each input relation against its home node.
pub fn full_reducer<S: Semiring>(
    q: &Query,
    t: &JoinTree,
    inst: &Instance<S::Elem>,
    ring: &S,
    stats: &mut RunStats,
) -> Result<Instance<S::Elem>> {
    let mut rels = node_relations(q, t, inst, ring, stats)?;
    reduce_node_relations(t, &mut rels, 0, None, stats)?;
    let mut out = Instance::new();
    for e in q.edges() {
        let home = t.edge_home(e.id).unwrap();
        let rel = inst.get(e.id).unwrap();
        out.insert(e.id, semi_join(rel, &rels[&home], stats)?);
    }
    Ok(out)
}

/// Key-wise ⊕ of result sets sharing a schema.
pub fn merge_results<S: Semiring>(
    parts: &[ResultSet<S::Elem>],
    ring: &S,
    stats: &mut RunStats,
) -> Result<ResultSet<S::Elem>> {
    let Some(first) = parts.first() else {
        return Ok(Relation::empty(Vec::new()));
    };
    for p in parts {
        if p.schema() != first.schema() {
            return Err(Error::SchemaMismatch(
                "merge_results requires identical schemas".into(),
            ));
        }
    }
    let mut index: std::collections::HashMap<crate::relation::Tuple, usize> = Default::default();
    let mut out = Relation::empty(first.schema().to_vec());
    for p in parts {
        for (t, w) in p.rows() {
            match index.get(t) {
                Some(&i) => {
                    stats.add_ops(1);
                    let merged = ring.plus(&out.rows()[i].1, w);
                    out.set_annotation(i, merged);
                }
                None => {
                    stats.add_row()?;
                    index.insert(t.clone(), out.len());
                    out.push_row(t.clone(), w.clone());
                }
            }
        }
    }
    stats.finish_relation(out.len() as u64);
    Ok(out)
}
