//! Join-aggregate queries as hypergraphs with output attributes.
//!
//! A query is a triple: attributes, hyperedges (one per relation), and the
//! set of output attributes. Attribute sets are bitsets over a dense index,
//! so the structural classifications (∃-connectivity, cleansed, separated,
//! a-hierarchical) are cheap set algebra.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Dense attribute index within one query.
pub type AttrId = usize;

/// Stable hyperedge (relation) id. Ids survive rewrites: cleansing removes
/// edges without renumbering, separation appends fresh ids.
pub type EdgeId = usize;

/// Bitset of attributes over the dense index. Queries are capped at 64
/// attributes, which is far above the sizes this engine targets.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AttrSet(pub u64);

pub const MAX_ATTRS: usize = 64;

impl AttrSet {
    pub const EMPTY: AttrSet = AttrSet(0);

    pub fn single(a: AttrId) -> AttrSet {
        AttrSet(1 << a)
    }
    pub fn insert(&mut self, a: AttrId) {
        debug_assert!(a < MAX_ATTRS);
        self.0 |= 1 << a;
    }
    pub fn remove(&mut self, a: AttrId) {
        self.0 &= !(1 << a);
    }
    pub fn contains(&self, a: AttrId) -> bool {
        self.0 >> a & 1 == 1
    }
    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }
    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }
    pub fn union(&self, other: AttrSet) -> AttrSet {
        AttrSet(self.0 | other.0)
    }
    pub fn intersect(&self, other: AttrSet) -> AttrSet {
        AttrSet(self.0 & other.0)
    }
    pub fn minus(&self, other: AttrSet) -> AttrSet {
        AttrSet(self.0 & !other.0)
    }
    pub fn is_subset(&self, other: AttrSet) -> bool {
        self.0 & !other.0 == 0
    }
    pub fn iter(&self) -> impl Iterator<Item = AttrId> + '_ {
        let bits = self.0;
        (0..MAX_ATTRS).filter(move |a| bits >> a & 1 == 1)
    }
}

impl FromIterator<AttrId> for AttrSet {
    fn from_iter<I: IntoIterator<Item = AttrId>>(it: I) -> AttrSet {
        let mut s = AttrSet::EMPTY;
        for a in it {
            s.insert(a);
        }
        s
    }
}

impl std::fmt::Debug for AttrSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{{{}}}",
            self.iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
    }
}

/// One relation schema: a named hyperedge over a set of attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hyperedge {
    pub id: EdgeId,
    pub name: String,
    pub attrs: AttrSet,
}

/// A join-aggregate query: hypergraph plus output attributes.
///
/// Relation names are distinct; a self-join is expressed by listing the same
/// physical data under two edge names, in which case its annotations
/// multiply once per occurrence. Hyperedges with equal attribute sets are
/// legal and get merged by the cleansing rewrite.
#[derive(Debug, Clone)]
pub struct Query {
    attr_names: Vec<String>,
    edges: Vec<Hyperedge>,
    output: AttrSet,
    next_edge_id: EdgeId,
}

impl Query {
    /// Build a query from named relations and output attribute names.
    /// Attribute ids are assigned in first-appearance order of `attributes`.
    pub fn new(
        attributes: &[&str],
        relations: &[(&str, &[&str])],
        output: &[&str],
    ) -> Result<Query> {
        let mut builder = QueryBuilder::default();
        for a in attributes {
            builder.attr(a)?;
        }
        for (name, attrs) in relations {
            builder.relation(name, attrs)?;
        }
        for o in output {
            builder.output(o)?;
        }
        builder.finish()
    }

    pub fn attr_count(&self) -> usize {
        self.attr_names.len()
    }
    pub fn attr_name(&self, a: AttrId) -> &str {
        &self.attr_names[a]
    }
    pub fn attr_names(&self) -> &[String] {
        &self.attr_names
    }
    pub fn attr_id(&self, name: &str) -> Option<AttrId> {
        self.attr_names.iter().position(|n| n == name)
    }

    /// All attributes (𝒱).
    pub fn all_attrs(&self) -> AttrSet {
        AttrSet::from_iter(0..self.attr_names.len())
    }
    /// Output attributes (𝐲).
    pub fn output(&self) -> AttrSet {
        self.output
    }
    pub fn edges(&self) -> &[Hyperedge] {
        &self.edges
    }
    pub fn edge(&self, id: EdgeId) -> Option<&Hyperedge> {
        self.edges.iter().find(|e| e.id == id)
    }
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Set of relations containing attribute `x` (ℰ_x).
    pub fn edges_containing(&self, x: AttrId) -> Result<Vec<&Hyperedge>> {
        if x >= self.attr_names.len() {
            return Err(Error::UnknownAttribute {
                attr: format!("#{x}"),
                context: "edges_containing".into(),
                location: None,
            });
        }
        Ok(self.edges.iter().filter(|e| e.attrs.contains(x)).collect())
    }

    /// `x` appears in exactly one relation.
    pub fn is_unique_attr(&self, x: AttrId) -> bool {
        self.edges.iter().filter(|e| e.attrs.contains(x)).count() == 1
    }

    /// Unique output attributes (𝒱_•).
    pub fn unique_output_attrs(&self) -> AttrSet {
        AttrSet::from_iter(self.output.iter().filter(|&a| self.is_unique_attr(a)))
    }

    /// Sub-query induced by attribute set `s`: edges become `e ∩ s` (empty
    /// intersections dropped, edge ids preserved), output becomes `s ∩ 𝐲`.
    pub fn induced_subquery(&self, s: AttrSet) -> Query {
        let edges = self
            .edges
            .iter()
            .filter(|e| !e.attrs.intersect(s).is_empty())
            .map(|e| Hyperedge {
                id: e.id,
                name: e.name.clone(),
                attrs: e.attrs.intersect(s),
            })
            .collect();
        Query {
            attr_names: self.attr_names.clone(),
            edges,
            output: self.output.intersect(s),
            next_edge_id: self.next_edge_id,
        }
    }

    /// Connected components of G^∃: relations are vertices, two relations are
    /// adjacent when they share a non-output attribute. Returns groups of
    /// edge ids; groups are sorted, and ordered by their smallest member.
    pub fn exists_connected_components(&self) -> Vec<Vec<EdgeId>> {
        let n = self.edges.len();
        let mut comp: Vec<usize> = (0..n).collect();
        fn find(comp: &mut Vec<usize>, i: usize) -> usize {
            if comp[i] != i {
                let r = find(comp, comp[i]);
                comp[i] = r;
            }
            comp[i]
        }
        for i in 0..n {
            for j in i + 1..n {
                let shared = self.edges[i]
                    .attrs
                    .intersect(self.edges[j].attrs)
                    .minus(self.output);
                if !shared.is_empty() {
                    let (ri, rj) = (find(&mut comp, i), find(&mut comp, j));
                    if ri != rj {
                        comp[ri] = rj;
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<EdgeId>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut comp, i);
            groups.entry(r).or_default().push(self.edges[i].id);
        }
        let mut out: Vec<Vec<EdgeId>> = groups.into_values().collect();
        for g in &mut out {
            g.sort_unstable();
        }
        out.sort_by_key(|g| g[0]);
        out
    }

    /// The sub-query spanned by a set of edges: attributes restricted to
    /// those occurring in the group, output restricted accordingly.
    pub fn component_query(&self, edge_ids: &[EdgeId]) -> Query {
        let mut attrs = AttrSet::EMPTY;
        let edges: Vec<Hyperedge> = self
            .edges
            .iter()
            .filter(|e| edge_ids.contains(&e.id))
            .cloned()
            .collect();
        for e in &edges {
            attrs = attrs.union(e.attrs);
        }
        Query {
            attr_names: self.attr_names.clone(),
            edges,
            output: self.output.intersect(attrs),
            next_edge_id: self.next_edge_id,
        }
    }

    /// Attributes that actually occur in some edge. Equals `all_attrs` for
    /// freshly parsed queries; narrower for components and rewrites.
    pub fn occurring_attrs(&self) -> AttrSet {
        self.edges
            .iter()
            .fold(AttrSet::EMPTY, |s, e| s.union(e.attrs))
    }

    /// Every unique attribute is an output attribute and no relation's
    /// attribute set is contained in another's.
    pub fn is_cleansed(&self) -> bool {
        for a in self.occurring_attrs().minus(self.output).iter() {
            if self.is_unique_attr(a) {
                return false;
            }
        }
        for e in &self.edges {
            for f in &self.edges {
                if e.id != f.id && e.attrs.is_subset(f.attrs) {
                    return false;
                }
            }
        }
        true
    }

    /// Every output attribute is unique, every unique attribute is an output
    /// attribute, and every relation with output attributes has another
    /// relation hosting its non-output part.
    pub fn is_separated(&self) -> bool {
        for a in self.output.intersect(self.occurring_attrs()).iter() {
            if !self.is_unique_attr(a) {
                return false;
            }
        }
        for a in self.occurring_attrs().minus(self.output).iter() {
            if self.is_unique_attr(a) {
                return false;
            }
        }
        for e in &self.edges {
            if e.attrs.intersect(self.output).is_empty() {
                continue;
            }
            let rest = e.attrs.minus(self.output);
            if rest.is_empty() {
                continue; // nothing to host
            }
            let hosted = self
                .edges
                .iter()
                .any(|f| f.id != e.id && rest.is_subset(f.attrs));
            if !hosted {
                return false;
            }
        }
        true
    }

    /// Hierarchical: for every attribute pair, ℰ_A and ℰ_B are nested or
    /// disjoint.
    fn is_hierarchical(&self) -> bool {
        let occ = self.occurring_attrs();
        let sets: Vec<(AttrId, Vec<EdgeId>)> = occ
            .iter()
            .map(|a| {
                (
                    a,
                    self.edges
                        .iter()
                        .filter(|e| e.attrs.contains(a))
                        .map(|e| e.id)
                        .collect(),
                )
            })
            .collect();
        for (i, (_, ea)) in sets.iter().enumerate() {
            for (_, eb) in sets.iter().skip(i + 1) {
                let a_in_b = ea.iter().all(|x| eb.contains(x));
                let b_in_a = eb.iter().all(|x| ea.contains(x));
                let disjoint = ea.iter().all(|x| !eb.contains(x));
                if !(a_in_b || b_in_a || disjoint) {
                    return false;
                }
            }
        }
        true
    }

    /// Acyclic and every ∃-connected component of the structurally cleansed
    /// query is hierarchical. Errors on cyclic input.
    pub fn is_a_hierarchical(&self) -> Result<bool> {
        crate::decomposition::gyo_join_tree(self).map_err(Error::Cyclic)?;
        let cleansed = self.structural_cleanse();
        for ids in cleansed.exists_connected_components() {
            if !cleansed.component_query(&ids).is_hierarchical() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Apply the cleansing rewrite to the hypergraph only: aggregate away
    /// unique non-output attributes (shrink the edge) and drop relations
    /// contained in another (lowest surviving id kept on ties). No data moves.
    pub fn structural_cleanse(&self) -> Query {
        let mut q = self.clone();
        loop {
            let occ = q.occurring_attrs();
            let mut changed = false;
            for a in occ.minus(q.output).iter() {
                let holders: Vec<usize> = (0..q.edges.len())
                    .filter(|&i| q.edges[i].attrs.contains(a))
                    .collect();
                if holders.len() == 1 {
                    q.edges[holders[0]].attrs.remove(a);
                    changed = true;
                    break;
                }
            }
            if changed {
                continue;
            }
            'outer: for i in 0..q.edges.len() {
                for j in 0..q.edges.len() {
                    if i == j {
                        continue;
                    }
                    let (ei, ej) = (&q.edges[i], &q.edges[j]);
                    // On equal attr sets keep the lower id.
                    let drop_i =
                        ei.attrs.is_subset(ej.attrs) && (ei.attrs != ej.attrs || ei.id > ej.id);
                    if drop_i {
                        q.edges.remove(i);
                        changed = true;
                        break 'outer;
                    }
                }
            }
            if !changed {
                return q;
            }
        }
    }

    /// Internal constructor for rewrites; callers maintain the invariants.
    pub(crate) fn from_parts(
        attr_names: Vec<String>,
        edges: Vec<Hyperedge>,
        output: AttrSet,
    ) -> Query {
        let next_edge_id = edges.iter().map(|e| e.id + 1).max().unwrap_or(0);
        Query {
            attr_names,
            edges,
            output,
            next_edge_id,
        }
    }

    pub(crate) fn set_output(&mut self, output: AttrSet) {
        self.output = output;
    }

    /// The same hypergraph with a different output set.
    pub fn with_output(&self, output: AttrSet) -> Query {
        let mut q = self.clone();
        q.output = output;
        q
    }

    pub(crate) fn edges_mut(&mut self) -> &mut Vec<Hyperedge> {
        &mut self.edges
    }

    /// Add a fresh attribute, returning its id.
    pub(crate) fn add_attr(&mut self, name: &str) -> Result<AttrId> {
        if self.attr_names.iter().any(|n| n == name) {
            return Err(Error::Parse(format!("attribute `{name}` already exists")));
        }
        if self.attr_names.len() >= MAX_ATTRS {
            return Err(Error::Parse(format!(
                "attribute limit of {MAX_ATTRS} exceeded"
            )));
        }
        self.attr_names.push(name.to_string());
        Ok(self.attr_names.len() - 1)
    }

    /// Add a fresh edge, returning its id.
    pub(crate) fn add_edge(&mut self, name: String, attrs: AttrSet) -> EdgeId {
        let id = self.next_edge_id;
        self.next_edge_id += 1;
        self.edges.push(Hyperedge { id, name, attrs });
        id
    }
}

/// Incremental construction with name validation.
#[derive(Default)]
pub struct QueryBuilder {
    attr_names: Vec<String>,
    edges: Vec<(String, Vec<String>)>,
    output: Vec<String>,
}

impl QueryBuilder {
    pub fn attr(&mut self, name: &str) -> Result<&mut Self> {
        if self.attr_names.iter().any(|n| n == name) {
            return Err(Error::Parse(format!("duplicate attribute `{name}`")));
        }
        if self.attr_names.len() >= MAX_ATTRS {
            return Err(Error::Parse(format!(
                "attribute limit of {MAX_ATTRS} exceeded"
            )));
        }
        self.attr_names.push(name.to_string());
        Ok(self)
    }

    pub fn relation(&mut self, name: &str, attrs: &[&str]) -> Result<&mut Self> {
        if self.edges.iter().any(|(n, _)| n == name) {
            return Err(Error::Parse(format!("duplicate relation name `{name}`")));
        }
        if attrs.is_empty() {
            return Err(Error::Parse(format!("relation `{name}` has no attributes")));
        }
        let mut seen = Vec::new();
        for a in attrs {
            if seen.contains(a) {
                return Err(Error::Parse(format!(
                    "relation `{name}` lists attribute `{a}` twice"
                )));
            }
            seen.push(a);
        }
        self.edges.push((
            name.to_string(),
            attrs.iter().map(|s| s.to_string()).collect(),
        ));
        Ok(self)
    }

    pub fn output(&mut self, name: &str) -> Result<&mut Self> {
        self.output.push(name.to_string());
        Ok(self)
    }

    pub fn finish(self) -> Result<Query> {
        let resolve = |name: &str, ctx: &str| -> Result<AttrId> {
            self.attr_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::UnknownAttribute {
                    attr: name.to_string(),
                    context: ctx.to_string(),
                    location: None,
                })
        };
        let mut edges = Vec::new();
        for (id, (name, attrs)) in self.edges.iter().enumerate() {
            let mut set = AttrSet::EMPTY;
            for a in attrs {
                set.insert(resolve(a, &format!("relation `{name}`"))?);
            }
            edges.push(Hyperedge {
                id,
                name: name.clone(),
                attrs: set,
            });
        }
        let mut output = AttrSet::EMPTY;
        for o in &self.output {
            output.insert(resolve(o, "output list")?);
        }
        // Every attribute must occur in at least one relation.
        for (a, name) in self.attr_names.iter().enumerate() {
            if !edges.iter().any(|e| e.attrs.contains(a)) {
                return Err(Error::Parse(format!(
                    "attribute `{name}` does not occur in any relation"
                )));
            }
        }
        Ok(Query::from_parts(self.attr_names, edges, output))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn edges_containing_star() {
        let q = fixtures::star_query(4);
        let b = q.attr_id("B").unwrap();
        assert_eq!(q.edges_containing(b).unwrap().len(), 4);
        let a1 = q.attr_id("A1").unwrap();
        let holders = q.edges_containing(a1).unwrap();
        assert_eq!(holders.len(), 1);
        assert_eq!(holders[0].name, "R1");
        assert!(q.edges_containing(99).is_err());
    }

    #[test]
    fn edges_containing_line() {
        let q = fixtures::line_query(4);
        let a3 = q.attr_id("A3").unwrap();
        let names: Vec<&str> = q
            .edges_containing(a3)
            .unwrap()
            .iter()
            .map(|e| e.name.as_str())
            .collect();
        assert_eq!(names, vec!["R2", "R3"]);
    }

    #[test]
    fn induced_subquery_on_outputs() {
        // Matrix multiplication: keeping {A, C} leaves two singleton edges.
        let q = fixtures::line_query(2);
        let s = q.output();
        let sub = q.induced_subquery(s);
        assert_eq!(sub.edge_count(), 2);
        for e in sub.edges() {
            assert_eq!(e.attrs.len(), 1);
        }
        // Inducing on the full attribute set is the identity up to edge ids.
        let full = q.induced_subquery(q.all_attrs());
        assert_eq!(full.edge_count(), q.edge_count());
        for (a, b) in full.edges().iter().zip(q.edges()) {
            assert_eq!(a.attrs, b.attrs);
        }
    }

    #[test]
    fn induced_subquery_branched_fixture() {
        let q = fixtures::branched_query();
        let sub = q.induced_subquery(q.output());
        let mut sizes: Vec<usize> = sub.edges().iter().map(|e| e.attrs.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 1, 1, 1, 1]);
        let c2 = q.attr_id("C2").unwrap();
        let c2_edges = sub
            .edges()
            .iter()
            .filter(|e| e.attrs == AttrSet::single(c2))
            .count();
        assert_eq!(c2_edges, 2);
    }

    #[test]
    fn exists_components() {
        let q = fixtures::line_query(2);
        assert_eq!(q.exists_connected_components().len(), 1);

        let q = fixtures::line_query(4);
        assert_eq!(q.exists_connected_components().len(), 1);

        let q = Query::new(
            &["A", "B", "C", "D"],
            &[("R", &["A", "B"]), ("S", &["C", "D"])],
            &["A", "C"],
        )
        .unwrap();
        assert_eq!(q.exists_connected_components().len(), 2);
    }

    #[test]
    fn components_partition_edges() {
        let q = fixtures::branched_query();
        let comps = q.exists_connected_components();
        let mut all: Vec<EdgeId> = comps.concat();
        all.sort_unstable();
        let mut ids: Vec<EdgeId> = q.edges().iter().map(|e| e.id).collect();
        ids.sort_unstable();
        assert_eq!(all, ids);
    }

    #[test]
    fn cleansed_checks() {
        let q = fixtures::line_query(3);
        assert!(q.is_cleansed());

        let q = Query::new(&["A", "B"], &[("R", &["A", "B"])], &["A"]).unwrap();
        assert!(!q.is_cleansed());

        let q = Query::new(
            &["A", "B"],
            &[("R", &["A", "B"]), ("S", &["A"])],
            &["A", "B"],
        )
        .unwrap();
        assert!(!q.is_cleansed());
    }

    #[test]
    fn separated_checks() {
        assert!(fixtures::star_query(4).is_separated());
        assert!(!fixtures::branched_query().is_separated());
        assert!(fixtures::separated_branched_query().is_separated());
    }

    #[test]
    fn a_hierarchical_checks() {
        assert!(fixtures::star_query(3).is_a_hierarchical().unwrap());
        assert!(!fixtures::line_query(3).is_a_hierarchical().unwrap());
        assert!(!fixtures::line_query(5).is_a_hierarchical().unwrap());
        let single = Query::new(&["A", "B"], &[("R", &["A", "B"])], &["A"]).unwrap();
        assert!(single.is_a_hierarchical().unwrap());
        assert!(fixtures::triangle_query().is_a_hierarchical().is_err());
    }

    #[test]
    fn structural_cleanse_reaches_fixpoint() {
        let q = Query::new(
            &["A", "B", "C"],
            &[("R", &["A", "B"]), ("S", &["B", "C"]), ("T", &["B"])],
            &["A"],
        )
        .unwrap();
        let c = q.structural_cleanse();
        assert!(c.is_cleansed());
        // C was a unique non-output attribute of S; S shrinks to {B} and is
        // then absorbed, as is T.
        assert_eq!(c.edge_count(), 1);
    }

    #[test]
    fn builder_rejects_unknown_names() {
        let e = Query::new(&["A"], &[("R", &["A", "X"])], &["A"]).unwrap_err();
        assert!(e.to_string().contains("X"));
        let e = Query::new(&["A"], &[("R", &["A"])], &["Z"]).unwrap_err();
        assert!(e.to_string().contains("Z"));
    }
}
