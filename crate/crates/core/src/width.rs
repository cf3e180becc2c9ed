//! Width analysis: integral fractional-edge-cover number for acyclic
//! (sub)queries, the free-connex fractional hypertree width (fn-fhtw), the
//! free-width and project-width bounds around it, and a combined report.
//!
//! All three widths share one recursion: split into ∃-connected components
//! and take the max; cleanse structurally when not cleansed; apply the base
//! formula on connected, cleansed queries. For fn-fhtw the base formula is
//! ρ* of the output-induced sub-query, which for acyclic queries has an
//! integral optimum found by a greedy cover.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::query::{AttrSet, EdgeId, Query};

/// Minimum integral edge cover of `q[s]` with one witnessing edge set.
///
/// Greedy loop: drop edges contained in another (lowest id kept on ties);
/// when an edge owns an attribute no other remaining edge has, select it and
/// delete all its attributes; repeat. Stalls exactly on cyclic induced
/// queries, which is an error here.
pub fn rho_star_acyclic(q: &Query, s: AttrSet) -> Result<(u64, Vec<EdgeId>)> {
    let induced = q.induced_subquery(s);
    let mut edges: Vec<(EdgeId, AttrSet)> =
        induced.edges().iter().map(|e| (e.id, e.attrs)).collect();
    let mut cover = Vec::new();
    loop {
        edges.retain(|(_, a)| !a.is_empty());
        if edges.is_empty() {
            cover.sort_unstable();
            return Ok((cover.len() as u64, cover));
        }
        // Drop contained edges.
        let mut dropped = false;
        'outer: for i in 0..edges.len() {
            for j in 0..edges.len() {
                if i == j {
                    continue;
                }
                let ((ei, ai), (ej, aj)) = (edges[i], edges[j]);
                if ai.is_subset(aj) && (ai != aj || ei > ej) {
                    edges.remove(i);
                    dropped = true;
                    break 'outer;
                }
            }
        }
        if dropped {
            continue;
        }
        // Select the lowest-id edge owning a unique attribute.
        let selected = edges
            .iter()
            .find(|(_, a)| {
                a.iter()
                    .any(|x| edges.iter().filter(|(_, b)| b.contains(x)).count() == 1)
            })
            .copied();
        match selected {
            Some((id, attrs)) => {
                cover.push(id);
                for (_, a) in &mut edges {
                    *a = a.minus(attrs);
                }
            }
            None => {
                return Err(Error::Invariant(format!(
                    "edge-cover greedy stalled: induced query over {:?} is cyclic",
                    s
                )))
            }
        }
    }
}

fn recursive_width(q: &Query, base: &dyn Fn(&Query) -> Result<u64>) -> Result<u64> {
    let comps = q.exists_connected_components();
    if comps.len() > 1 {
        let mut best = 1;
        for ids in comps {
            best = best.max(recursive_width(&q.component_query(&ids), base)?);
        }
        return Ok(best);
    }
    if !q.is_cleansed() {
        return recursive_width(&q.structural_cleanse(), base);
    }
    Ok(base(q)?.max(1))
}

fn ensure_acyclic(q: &Query) -> Result<()> {
    crate::decomposition::gyo_join_tree(q)
        .map(|_| ())
        .map_err(Error::Cyclic)
}

/// Free-connex fractional hypertree width of an acyclic query.
pub fn fn_fhtw(q: &Query) -> Result<u64> {
    ensure_acyclic(q)?;
    recursive_width(q, &|c| Ok(rho_star_acyclic(c, c.output())?.0))
}

/// Free-width: count of relations meeting a unique output attribute.
pub fn freew(q: &Query) -> Result<u64> {
    ensure_acyclic(q)?;
    recursive_width(q, &|c| {
        let marked = c.unique_output_attrs();
        Ok(c.edges()
            .iter()
            .filter(|e| !e.attrs.intersect(marked).is_empty())
            .count() as u64)
    })
}

/// Project-width: relation count of the cleansed connected core.
pub fn projw(q: &Query) -> Result<u64> {
    ensure_acyclic(q)?;
    recursive_width(q, &|c| Ok(c.edge_count() as u64))
}

/// Classification and width summary for a query.
#[derive(Debug, Clone, Serialize)]
pub struct WidthReport {
    pub acyclic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fn_fhtw: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freew: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projw: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free_connex: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_hierarchical: Option<bool>,
    /// Integral optimal cover of the output-induced sub-query (edge ids).
    pub covering_edges: Vec<EdgeId>,
    /// 1 - 1/fn-fhtw, the output-size exponent of the evaluation bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cyclic_residue: Option<Vec<String>>,
}

/// Populate a [`WidthReport`]; cyclic queries get `acyclic: false` with the
/// residue and no widths.
pub fn analyze(q: &Query) -> WidthReport {
    match crate::decomposition::gyo_join_tree(q) {
        Err(report) => WidthReport {
            acyclic: false,
            fn_fhtw: None,
            freew: None,
            projw: None,
            free_connex: None,
            a_hierarchical: None,
            covering_edges: Vec::new(),
            predicted_exponent: None,
            cyclic_residue: Some(report.residue_names),
        },
        Ok(_) => {
            let w = fn_fhtw(q).expect("acyclic");
            WidthReport {
                acyclic: true,
                fn_fhtw: Some(w),
                freew: Some(freew(q).expect("acyclic")),
                projw: Some(projw(q).expect("acyclic")),
                free_connex: Some(w == 1),
                a_hierarchical: Some(q.is_a_hierarchical().expect("acyclic")),
                covering_edges: rho_star_acyclic(q, q.output())
                    .map(|(_, c)| c)
                    .unwrap_or_default(),
                predicted_exponent: Some(1.0 - 1.0 / w as f64),
                cyclic_residue: None,
            }
        }
    }
}
