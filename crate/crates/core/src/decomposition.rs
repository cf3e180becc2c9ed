//! Width-1 tree decompositions (join trees).
//!
//! [`gyo_join_tree`] runs GYO ear removal over the containment-maximal
//! hyperedges; it either yields a join tree (bags = maximal edges) or the
//! irreducible residue witnessing a cycle. [`separated_join_tree`] builds the
//! tree the hybrid engine needs for separated queries: output-carrying
//! relations become leaves, hanging off a skeleton tree built over the
//! non-output parts of the relations. Skeleton bags need not correspond to
//! input relations; their derived relations are built from projections.
//!
//! Every query edge is assigned a *home* node whose bag contains it; home
//! assignment is how relations not chosen as a bag source (duplicates,
//! contained relations) contribute their tuples and annotations exactly once.

use std::collections::BTreeMap;

use num_rational::Ratio;

use crate::error::{CyclicReport, Error, Result};
use crate::query::{AttrSet, EdgeId, Query};

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub bag: AttrSet,
    /// Lowest-id edge whose attribute set equals the bag, if any.
    pub source_edge: Option<EdgeId>,
}

#[derive(Debug, Clone)]
pub struct JoinTree {
    nodes: Vec<TreeNode>,
    adj: Vec<Vec<NodeId>>,
    pub root: Option<NodeId>,
    edge_home: BTreeMap<EdgeId, NodeId>,
}

impl JoinTree {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
    pub fn bag(&self, u: NodeId) -> AttrSet {
        self.nodes[u].bag
    }
    pub fn source_edge(&self, u: NodeId) -> Option<EdgeId> {
        self.nodes[u].source_edge
    }
    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adj[u]
    }
    pub fn is_leaf(&self, u: NodeId) -> bool {
        self.adj[u].len() == 1 || self.nodes.len() == 1
    }
    pub fn leaves(&self) -> Vec<NodeId> {
        if self.nodes.len() == 1 {
            return vec![0];
        }
        (0..self.nodes.len())
            .filter(|&u| self.adj[u].len() == 1)
            .collect()
    }
    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.nodes.len() && self.adj[u].contains(&v)
    }
    /// Undirected edges as `(lo, hi)` pairs, sorted.
    pub fn tree_edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for u in 0..self.nodes.len() {
            for &v in &self.adj[u] {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }
    /// Home node of a query edge: its bag contains the edge.
    pub fn edge_home(&self, e: EdgeId) -> Option<NodeId> {
        self.edge_home.get(&e).copied()
    }
    pub fn edge_homes(&self) -> &BTreeMap<EdgeId, NodeId> {
        &self.edge_home
    }

    /// Nodes in post-order for the tree rooted at `root` (children before
    /// parents, lower node ids first), plus the parent map.
    pub fn rooted_order(&self, root: NodeId) -> (Vec<NodeId>, Vec<Option<NodeId>>) {
        self.rooted_order_within(root, None)
    }

    /// Same as [`Self::rooted_order`] but restricted to a connected node
    /// subset (`None` = all nodes).
    pub fn rooted_order_within(
        &self,
        root: NodeId,
        within: Option<&[NodeId]>,
    ) -> (Vec<NodeId>, Vec<Option<NodeId>>) {
        let allowed = |u: NodeId| within.is_none_or(|w| w.contains(&u));
        let mut parent = vec![None; self.nodes.len()];
        let mut order = Vec::new();
        // Iterative post-order with deterministic child order.
        let mut stack = vec![(root, false)];
        let mut seen = vec![false; self.nodes.len()];
        seen[root] = true;
        while let Some((u, expanded)) = stack.pop() {
            if expanded {
                order.push(u);
                continue;
            }
            stack.push((u, true));
            let mut children: Vec<NodeId> = self.adj[u]
                .iter()
                .copied()
                .filter(|&v| !seen[v] && allowed(v))
                .collect();
            children.sort_unstable();
            // Reverse so the lowest-id child is processed first.
            for &c in children.iter().rev() {
                seen[c] = true;
                parent[c] = Some(u);
                stack.push((c, false));
            }
        }
        (order, parent)
    }

    /// Check the tree-decomposition invariants against a query: every edge
    /// covered by its home bag, running intersection, width 1, distinct bags.
    pub fn validate(&self, q: &Query) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::Invariant("empty join tree".into()));
        }
        // Tree shape: connected with n-1 edges.
        if self.tree_edges().len() != n - 1 {
            return Err(Error::Invariant("join tree edge count".into()));
        }
        let (order, _) = self.rooted_order(0);
        if order.len() != n {
            return Err(Error::Invariant("join tree is not connected".into()));
        }
        // Bags pairwise distinct.
        for u in 0..n {
            for v in u + 1..n {
                if self.nodes[u].bag == self.nodes[v].bag {
                    return Err(Error::Invariant("duplicate bags".into()));
                }
            }
        }
        // Width 1: every bag inside some edge.
        for u in 0..n {
            if !q
                .edges()
                .iter()
                .any(|e| self.nodes[u].bag.is_subset(e.attrs))
            {
                return Err(Error::Invariant(format!(
                    "bag of node {u} not within any edge"
                )));
            }
        }
        // Edge coverage via homes.
        for e in q.edges() {
            let home = self
                .edge_home(e.id)
                .ok_or_else(|| Error::Invariant(format!("edge {} has no home", e.name)))?;
            if !e.attrs.is_subset(self.nodes[home].bag) {
                return Err(Error::Invariant(format!(
                    "edge {} not covered by its home",
                    e.name
                )));
            }
        }
        // Running intersection: nodes holding each attribute form a subtree.
        for a in q.all_attrs().iter() {
            let holders: Vec<NodeId> = (0..n).filter(|&u| self.nodes[u].bag.contains(a)).collect();
            if holders.len() <= 1 {
                continue;
            }
            let mut reach = vec![false; n];
            let mut stack = vec![holders[0]];
            reach[holders[0]] = true;
            while let Some(u) = stack.pop() {
                for &v in &self.adj[u] {
                    if !reach[v] && self.nodes[v].bag.contains(a) {
                        reach[v] = true;
                        stack.push(v);
                    }
                }
            }
            if !holders.iter().all(|&u| reach[u]) {
                return Err(Error::Invariant(format!(
                    "attribute {} violates running intersection",
                    q.attr_name(a)
                )));
            }
        }
        Ok(())
    }

    /// Indented text rendering, for debugging and docs.
    pub fn render(&self, q: &Query) -> String {
        let root = self.root.unwrap_or(0);
        let (order, parent) = self.rooted_order(root);
        let mut depth = vec![0usize; self.nodes.len()];
        for &u in order.iter().rev() {
            if let Some(p) = parent[u] {
                depth[u] = depth[p] + 1;
            }
        }
        let mut lines = Vec::new();
        let mut pre: Vec<NodeId> = order.clone();
        pre.reverse();
        for u in pre {
            let attrs: Vec<&str> = self.nodes[u].bag.iter().map(|a| q.attr_name(a)).collect();
            let src = self.nodes[u]
                .source_edge
                .and_then(|e| q.edge(e))
                .map(|e| format!(" <- {}", e.name))
                .unwrap_or_default();
            lines.push(format!(
                "{}node {}: {{{}}}{}",
                "  ".repeat(depth[u]),
                u,
                attrs.join(","),
                src
            ));
        }
        lines.join("\n")
    }
}

/// One side of a split tree: the subtree hanging off `cut.0` after removing
/// the undirected edge `cut`, together with the leaf fraction φ.
#[derive(Debug, Clone)]
pub struct SubtreeView {
    pub cut: (NodeId, NodeId),
    pub nodes: Vec<NodeId>,
    pub leaf_set: Vec<NodeId>,
    pub phi: Ratio<u64>,
}

impl SubtreeView {
    pub fn phi_f64(&self) -> f64 {
        *self.phi.numer() as f64 / *self.phi.denom() as f64
    }
}

/// Remove tree edge `{u1, u2}`; the first view contains `u1`, the second
/// `u2`. `fnfhtw` (the leaf count of a separated tree) normalizes φ and is
/// injected by the caller to avoid a dependency on the width engine.
pub fn split(
    t: &JoinTree,
    u1: NodeId,
    u2: NodeId,
    fnfhtw: u64,
) -> Result<(SubtreeView, SubtreeView)> {
    if !t.has_edge(u1, u2) {
        return Err(Error::Invariant(format!(
            "{{{u1},{u2}}} is not a tree edge"
        )));
    }
    let side = |from: NodeId, avoid: NodeId| -> SubtreeView {
        let mut nodes = Vec::new();
        let mut stack = vec![from];
        let mut seen = vec![false; t.node_count()];
        seen[from] = true;
        seen[avoid] = true;
        while let Some(u) = stack.pop() {
            nodes.push(u);
            for &v in t.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        nodes.sort_unstable();
        let leaf_set: Vec<NodeId> = t
            .leaves()
            .into_iter()
            .filter(|u| nodes.contains(u))
            .collect();
        SubtreeView {
            cut: (from, avoid),
            nodes,
            leaf_set: leaf_set.clone(),
            phi: Ratio::new(leaf_set.len() as u64, fnfhtw.max(1)),
        }
    };
    Ok((side(u1, u2), side(u2, u1)))
}

/// The sub-query a subtree view evaluates: one hyperedge per view node (its
/// bag), keeping as outputs the view's output attributes plus the join
/// attributes of the cut.
pub fn subquery_of_subtree(t: &JoinTree, view: &SubtreeView, q: &Query) -> Query {
    let (u1, u2) = view.cut;
    let cut_attrs = t.bag(u1).intersect(t.bag(u2));
    let mut attrs = AttrSet::EMPTY;
    let mut edges = Vec::new();
    for &u in &view.nodes {
        attrs = attrs.union(t.bag(u));
        edges.push(crate::query::Hyperedge {
            id: u,
            name: format!("node{u}"),
            attrs: t.bag(u),
        });
    }
    let output = attrs.intersect(q.output()).union(cut_attrs);
    let mut sub = Query::from_parts(q.attr_names().to_vec(), edges, output);
    // A full-tree "view" (possible when callers synthesize one) keeps the
    // original output set.
    if view.nodes.len() == t.node_count() {
        sub.set_output(attrs.intersect(q.output()));
    }
    sub
}

/// The query a join tree evaluates over its node relations: one hyperedge
/// per node (its bag, edge id = node id), original outputs.
pub fn tree_query(t: &JoinTree, q: &Query) -> Query {
    let mut attrs = AttrSet::EMPTY;
    let edges: Vec<crate::query::Hyperedge> = (0..t.node_count())
        .map(|u| {
            attrs = attrs.union(t.bag(u));
            crate::query::Hyperedge {
                id: u,
                name: format!("node{u}"),
                attrs: t.bag(u),
            }
        })
        .collect();
    Query::from_parts(q.attr_names().to_vec(), edges, attrs.intersect(q.output()))
}

/// GYO over a list of attribute sets. Returns tree edges over set indices,
/// or the indices of the irreducible residue. Ear order: lowest index first.
fn gyo_on_sets(sets: &[AttrSet]) -> std::result::Result<Vec<(usize, usize)>, Vec<usize>> {
    let n = sets.len();
    let mut live: Vec<usize> = (0..n).collect();
    let mut edges = Vec::new();
    while live.len() > 1 {
        let mut removed = None;
        'scan: for (pos, &u) in live.iter().enumerate() {
            let mut shared = AttrSet::EMPTY;
            for &v in &live {
                if v != u {
                    shared = shared.union(sets[u].intersect(sets[v]));
                }
            }
            for &v in &live {
                if v != u && shared.is_subset(sets[v]) {
                    edges.push((u, v));
                    removed = Some(pos);
                    break 'scan;
                }
            }
        }
        match removed {
            Some(pos) => {
                live.remove(pos);
            }
            None => return Err(live),
        }
    }
    Ok(edges)
}

fn build_tree(
    node_bags: Vec<(AttrSet, Option<EdgeId>)>,
    tree_edges: &[(NodeId, NodeId)],
    edge_home: BTreeMap<EdgeId, NodeId>,
) -> JoinTree {
    let n = node_bags.len();
    let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for &(u, v) in tree_edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    for l in &mut adj {
        l.sort_unstable();
    }
    JoinTree {
        nodes: node_bags
            .into_iter()
            .map(|(bag, source_edge)| TreeNode { bag, source_edge })
            .collect(),
        adj,
        root: None,
        edge_home,
    }
}

/// GYO reduction. On success the bags are exactly the containment-maximal
/// hyperedges, ordered by their lowest source edge id; contained and
/// duplicate edges are assigned homes. Cyclic input is a value, not a fault.
pub fn gyo_join_tree(q: &Query) -> std::result::Result<JoinTree, CyclicReport> {
    // Distinct attribute sets, represented by their lowest edge id.
    let mut reps: Vec<(AttrSet, EdgeId)> = Vec::new();
    for e in q.edges() {
        match reps.iter_mut().find(|(s, _)| *s == e.attrs) {
            Some((_, rep)) => *rep = (*rep).min(e.id),
            None => reps.push((e.attrs, e.id)),
        }
    }
    // Containment-maximal sets only.
    let maximal: Vec<(AttrSet, EdgeId)> = reps
        .iter()
        .filter(|(s, _)| !reps.iter().any(|(t, _)| t != s && s.is_subset(*t)))
        .cloned()
        .collect();
    let mut ordered = maximal;
    ordered.sort_by_key(|&(_, rep)| rep);

    let sets: Vec<AttrSet> = ordered.iter().map(|&(s, _)| s).collect();
    let tree_edges = gyo_on_sets(&sets).map_err(|residue| CyclicReport {
        residue: residue.iter().map(|&i| ordered[i].1).collect(),
        residue_names: residue
            .iter()
            .filter_map(|&i| q.edge(ordered[i].1).map(|e| e.name.clone()))
            .collect(),
    })?;

    let node_bags: Vec<(AttrSet, Option<EdgeId>)> =
        ordered.iter().map(|&(s, rep)| (s, Some(rep))).collect();
    let mut edge_home = BTreeMap::new();
    for e in q.edges() {
        // Exact bag match first, else the lowest node whose bag contains it.
        let exact = sets.iter().position(|&s| s == e.attrs);
        let host = exact.or_else(|| sets.iter().position(|&s| e.attrs.is_subset(s)));
        edge_home.insert(e.id, host.expect("maximal sets cover every edge"));
    }
    Ok(build_tree(node_bags, &tree_edges, edge_home))
}

/// Join tree for a separated (and cleansed) acyclic query in which the
/// leaves are exactly the output-carrying relations. Internal nodes carry
/// the containment-maximal non-output parts of the relations, connected by
/// GYO; each output relation hangs off the skeleton node hosting its
/// non-output part.
pub fn separated_join_tree(q: &Query) -> Result<JoinTree> {
    if !q.is_separated() {
        return Err(Error::NotSeparated(
            "separated join tree requires a separated query".into(),
        ));
    }
    if !q.is_cleansed() {
        return Err(Error::NotSeparated(
            "separated join tree requires a cleansed query".into(),
        ));
    }
    let y = q.output();
    let output_edges: Vec<&crate::query::Hyperedge> = q
        .edges()
        .iter()
        .filter(|e| !e.attrs.intersect(y).is_empty())
        .collect();

    if q.edge_count() == 1 {
        let e = &q.edges()[0];
        let mut home = BTreeMap::new();
        home.insert(e.id, 0);
        let tree = build_tree(vec![(e.attrs, Some(e.id))], &[], home);
        tree.validate(q)?;
        return Ok(tree);
    }
    if output_edges.is_empty() {
        return Err(Error::Invariant(
            "separated join tree needs at least one output-carrying relation".into(),
        ));
    }

    // Skeleton: containment-maximal distinct non-output reducts.
    let mut reducts: Vec<(AttrSet, EdgeId)> = Vec::new();
    for e in q.edges() {
        let r = e.attrs.minus(y);
        match reducts.iter_mut().find(|(s, _)| *s == r) {
            Some((_, rep)) => *rep = (*rep).min(e.id),
            None => reducts.push((r, e.id)),
        }
    }
    let mut skeleton: Vec<(AttrSet, EdgeId)> = reducts
        .iter()
        .filter(|(s, _)| !s.is_empty() && !reducts.iter().any(|(t, _)| t != s && s.is_subset(*t)))
        .cloned()
        .collect();
    skeleton.sort_by_key(|&(_, rep)| rep);
    if skeleton.is_empty() {
        // Degenerate: every relation is pure output. An empty bag is a legal
        // width-1 hub connecting the leaves.
        skeleton.push((AttrSet::EMPTY, usize::MAX));
    }

    let skel_sets: Vec<AttrSet> = skeleton.iter().map(|&(s, _)| s).collect();
    let skel_edges = gyo_on_sets(&skel_sets).map_err(|residue| {
        Error::Cyclic(CyclicReport {
            residue: residue.clone(),
            residue_names: residue
                .iter()
                .map(|&i| format!("non-output part #{i}"))
                .collect(),
        })
    })?;

    let owner = |set: AttrSet| -> NodeId {
        skel_sets
            .iter()
            .position(|&m| set.is_subset(m))
            .expect("every non-output part fits a maximal reduct")
    };

    let mut node_bags: Vec<(AttrSet, Option<EdgeId>)> = Vec::new();
    for &(s, _) in &skeleton {
        let source = q
            .edges()
            .iter()
            .filter(|e| e.attrs == s)
            .map(|e| e.id)
            .min();
        node_bags.push((s, source));
    }
    let mut tree_edges: Vec<(NodeId, NodeId)> = skel_edges;
    let mut edge_home: BTreeMap<EdgeId, NodeId> = BTreeMap::new();
    for e in q.edges() {
        if e.attrs.intersect(y).is_empty() {
            edge_home.insert(e.id, owner(e.attrs));
        }
    }
    for e in &output_edges {
        let leaf = node_bags.len();
        node_bags.push((e.attrs, Some(e.id)));
        tree_edges.push((leaf, owner(e.attrs.minus(y))));
        edge_home.insert(e.id, leaf);
    }

    let tree = build_tree(node_bags, &tree_edges, edge_home);
    tree.validate(q)?;
    // Postcondition: leaves are exactly the output-carrying relations.
    let leaf_sources: Vec<EdgeId> = tree
        .leaves()
        .iter()
        .filter_map(|&u| tree.source_edge(u))
        .collect();
    let mut expected: Vec<EdgeId> = output_edges.iter().map(|e| e.id).collect();
    let mut got = leaf_sources;
    got.sort_unstable();
    expected.sort_unstable();
    if got != expected {
        return Err(Error::Invariant(
            "separated join tree leaves do not match output relations".into(),
        ));
    }
    Ok(tree)
}
