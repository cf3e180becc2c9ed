//! Text formats: JSON query files, relation CSVs with a trailing `__w`
//! annotation column, and deterministic result CSVs.
//!
//! Query file shape:
//!
//! ```json
//! {
//!   "attributes": ["A", "B", "C"],
//!   "relations": [ {"name": "R", "attrs": ["A", "B"]} ],
//!   "output": ["A", "C"]
//! }
//! ```
//!
//! Relation CSV: header row = the relation's attribute names plus an
//! optional final `__w` column (annotation in the semiring's text encoding,
//! defaulting to one). Result CSV: output attributes in query declaration
//! order plus `__w`, rows sorted by value.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::instance::{Instance, ResultSet};
use crate::query::{Query, QueryBuilder};
use crate::relation::{Relation, Tuple, Value};
use crate::semiring::Semiring;

pub const WEIGHT_COLUMN: &str = "__w";

#[derive(Deserialize)]
struct QueryFile {
    attributes: Vec<String>,
    relations: Vec<RelationDecl>,
    #[serde(default)]
    output: Vec<String>,
}

#[derive(Deserialize)]
struct RelationDecl {
    name: String,
    attrs: Vec<String>,
}

/// Line/column of the first occurrence of a quoted token, for error reports
/// on semantically invalid names.
fn locate(text: &str, token: &str) -> Option<String> {
    let needle = format!("\"{token}\"");
    let pos = text.find(&needle)?;
    let line = text[..pos].bytes().filter(|&b| b == b'\n').count() + 1;
    let col = pos - text[..pos].rfind('\n').map_or(0, |p| p + 1) + 1;
    Some(format!("line {line}, column {col}"))
}

pub fn parse_query_str(text: &str) -> Result<Query> {
    let file: QueryFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("query file: {e}")))?;
    let mut b = QueryBuilder::default();
    for a in &file.attributes {
        b.attr(a)?;
    }
    for r in &file.relations {
        let attrs: Vec<&str> = r.attrs.iter().map(|s| s.as_str()).collect();
        b.relation(&r.name, &attrs)?;
    }
    for o in &file.output {
        b.output(o)?;
    }
    b.finish().map_err(|e| match e {
        Error::UnknownAttribute {
            attr,
            context,
            location: _,
        } => Error::UnknownAttribute {
            location: locate(text, &attr),
            attr,
            context,
        },
        other => other,
    })
}

pub fn read_query_file(path: &Path) -> Result<Query> {
    let text = std::fs::read_to_string(path)?;
    parse_query_str(&text)
}

pub fn query_to_json(q: &Query) -> serde_json::Value {
    serde_json::json!({
        "attributes": q.attr_names(),
        "relations": q.edges().iter().map(|e| {
            serde_json::json!({
                "name": e.name,
                "attrs": e.attrs.iter().map(|a| q.attr_name(a)).collect::<Vec<_>>(),
            })
        }).collect::<Vec<_>>(),
        "output": q.output().iter().map(|a| q.attr_name(a)).collect::<Vec<_>>(),
    })
}

/// Read one relation CSV. Columns may be in any order but must match the
/// declared attributes exactly, with `__w` (optional) last.
pub fn read_relation_csv<S: Semiring>(
    path: &Path,
    q: &Query,
    edge_name: &str,
    ring: &S,
) -> Result<Relation<S::Elem>> {
    let edge = q
        .edges()
        .iter()
        .find(|e| e.name == edge_name)
        .ok_or_else(|| Error::Parse(format!("unknown relation `{edge_name}`")))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .clone();
    let mut attr_cols = Vec::new();
    let mut weight_col = None;
    for (i, h) in headers.iter().enumerate() {
        if h == WEIGHT_COLUMN {
            weight_col = Some(i);
        } else {
            let a = q.attr_id(h).ok_or_else(|| Error::UnknownAttribute {
                attr: h.to_string(),
                context: format!("relation file {}", path.display()),
                location: None,
            })?;
            if !edge.attrs.contains(a) {
                return Err(Error::SchemaMismatch(format!(
                    "column `{h}` is not an attribute of relation `{edge_name}`"
                )));
            }
            attr_cols.push((i, a));
        }
    }
    if attr_cols.len() != edge.attrs.len() {
        return Err(Error::SchemaMismatch(format!(
            "relation `{edge_name}` expects {} attribute columns, file has {}",
            edge.attrs.len(),
            attr_cols.len()
        )));
    }
    let schema: Vec<usize> = attr_cols.iter().map(|&(_, a)| a).collect();
    let mut rows: Vec<(Tuple, S::Elem)> = Vec::new();
    for (lineno, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let tuple: Tuple = attr_cols
            .iter()
            .map(|&(i, _)| Value::parse(record.get(i).unwrap_or_default()))
            .collect();
        let weight = match weight_col {
            Some(i) => ring
                .parse(record.get(i).unwrap_or_default())
                .map_err(|e| Error::Parse(format!("{} row {}: {e}", path.display(), lineno + 2)))?,
            None => ring.one(),
        };
        rows.push((tuple, weight));
    }
    Relation::from_rows(schema, rows, ring)
}

/// Load `<dir>/<relation name>.csv` for every relation of the query.
pub fn read_instance_dir<S: Semiring>(
    dir: &Path,
    q: &Query,
    ring: &S,
) -> Result<Instance<S::Elem>> {
    let mut inst = Instance::new();
    for e in q.edges() {
        let path = dir.join(format!("{}.csv", e.name));
        if !path.exists() {
            return Err(Error::SchemaMismatch(format!(
                "missing data file {}",
                path.display()
            )));
        }
        inst.insert(e.id, read_relation_csv(&path, q, &e.name, ring)?);
    }
    Ok(inst)
}

fn write_csv<S: Semiring>(rel: &Relation<S::Elem>, header: &[String], ring: &S) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for (t, w) in rel.rows() {
        let mut cells: Vec<String> = t.iter().map(|v| v.render()).collect();
        cells.push(ring.format(w));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Relation CSV in schema order, rows sorted, `__w` last.
pub fn relation_to_csv<S: Semiring>(rel: &Relation<S::Elem>, q: &Query, ring: &S) -> String {
    let mut header: Vec<String> = rel
        .schema()
        .iter()
        .map(|&a| q.attr_name(a).to_string())
        .collect();
    header.push(WEIGHT_COLUMN.to_string());
    write_csv(&rel.sorted(), &header, ring)
}

/// Result CSV: output attributes in query declaration order, rows sorted.
pub fn result_to_csv<S: Semiring>(rs: &ResultSet<S::Elem>, q: &Query, ring: &S) -> String {
    let order: Vec<usize> = q.output().intersect(q.occurring_attrs()).iter().collect();
    // Reorder columns to declaration (= id) order, which `canonical` gives.
    let canon = rs.canonical();
    debug_assert_eq!(canon.schema(), order.as_slice());
    let mut header: Vec<String> = order.iter().map(|&a| q.attr_name(a).to_string()).collect();
    header.push(WEIGHT_COLUMN.to_string());
    write_csv(&canon, &header, ring)
}

/// Write a generated query and instance as `query.json` plus one CSV per
/// relation under `dir`.
pub fn write_dataset(dir: &Path, q: &Query, inst: &Instance<u64>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let query_json =
        serde_json::to_string_pretty(&query_to_json(q)).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(dir.join("query.json"), query_json + "\n")?;
    for e in q.edges() {
        let rel = inst
            .get(e.id)
            .ok_or_else(|| Error::SchemaMismatch(format!("no data for `{}`", e.name)))?;
        std::fs::write(
            dir.join(format!("{}.csv", e.name)),
            relation_to_csv(rel, q, &crate::semiring::Counting),
        )?;
    }
    Ok(())
}
