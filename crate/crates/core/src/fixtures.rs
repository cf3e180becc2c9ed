//! Canonical query shapes used across tests and benchmarks.

use crate::query::Query;

/// Line query with `k` relations: `R_i(A_i, A_{i+1})`, outputs `A_1` and
/// `A_{k+1}`. `k = 2` is matrix multiplication.
pub fn line_query(k: usize) -> Query {
    assert!(k >= 2);
    let attr_names: Vec<String> = (1..=k + 1).map(|i| format!("A{i}")).collect();
    let attrs: Vec<&str> = attr_names.iter().map(|s| s.as_str()).collect();
    let rel_names: Vec<String> = (1..=k).map(|i| format!("R{i}")).collect();
    let mut rels: Vec<(&str, Vec<&str>)> = Vec::new();
    for i in 0..k {
        rels.push((rel_names[i].as_str(), vec![attrs[i], attrs[i + 1]]));
    }
    let rels_ref: Vec<(&str, &[&str])> = rels.iter().map(|(n, a)| (*n, a.as_slice())).collect();
    Query::new(&attrs, &rels_ref, &[attrs[0], attrs[k]]).unwrap()
}

/// Star query with `k` relations: `R_i(A_i, B)`, outputs `A_1..A_k`.
pub fn star_query(k: usize) -> Query {
    assert!(k >= 2);
    let mut attr_names: Vec<String> = (1..=k).map(|i| format!("A{i}")).collect();
    attr_names.push("B".to_string());
    let attrs: Vec<&str> = attr_names.iter().map(|s| s.as_str()).collect();
    let rel_names: Vec<String> = (1..=k).map(|i| format!("R{i}")).collect();
    let mut rels: Vec<(&str, Vec<&str>)> = Vec::new();
    for i in 0..k {
        rels.push((rel_names[i].as_str(), vec![attrs[i], "B"]));
    }
    let rels_ref: Vec<(&str, &[&str])> = rels.iter().map(|(n, a)| (*n, a.as_slice())).collect();
    Query::new(&attrs, &rels_ref, &attrs[..k]).unwrap()
}

/// The smallest cyclic query: a triangle.
pub fn triangle_query() -> Query {
    Query::new(
        &["A", "B", "C"],
        &[("R", &["A", "B"]), ("S", &["B", "C"]), ("T", &["C", "A"])],
        &["A"],
    )
    .unwrap()
}

/// Three binary arms hanging off two overlapping core relations, with the
/// arm tips and one shared core attribute as outputs. The canonical query
/// whose widths spread apart: freew 3 < fn-fhtw 4 < projw 5.
pub fn branched_query() -> Query {
    Query::new(
        &["A1", "A2", "A3", "B1", "B2", "B3", "C1", "C2"],
        &[
            ("R1", &["A1", "B1"]),
            ("R2", &["A2", "B2"]),
            ("R3", &["A3", "B3"]),
            ("R4", &["B1", "B2", "C1", "C2"]),
            ("R5", &["B3", "C1", "C2"]),
        ],
        &["A1", "A2", "A3", "C2"],
    )
    .unwrap()
}

/// The separated rewrite of [`branched_query`]: the joint output `C2` moves
/// onto a fresh unique attribute `B4` of the second core relation, which in
/// turn gets a pendant relation `R4(A4, B4)` carrying the new unique output
/// `A4`. Six relations, four of them output-carrying.
pub fn separated_branched_query() -> Query {
    Query::new(
        &["A1", "A2", "A3", "A4", "B1", "B2", "B3", "B4", "C1", "C2"],
        &[
            ("R1", &["A1", "B1"]),
            ("R2", &["A2", "B2"]),
            ("R3", &["A3", "B3"]),
            ("R4", &["A4", "B4"]),
            ("R5", &["B1", "B2", "C1", "C2"]),
            ("R6", &["B3", "B4", "C1", "C2"]),
        ],
        &["A1", "A2", "A3", "A4"],
    )
    .unwrap()
}
