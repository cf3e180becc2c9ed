//! Annotated relations and the relational-algebra kernel.
//!
//! A relation is an ordered schema plus rows of `(tuple, annotation)`. Tuples
//! are unique per relation: duplicates are merged with ⊕ on construction, and
//! the kernel operations preserve uniqueness. All annotation flow goes
//! through the semiring handle passed in; see the call-site audit in
//! [`crate::semiring`].

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::query::{AttrId, AttrSet};
use crate::semiring::Semiring;
use crate::stats::RunStats;

/// A domain value: an integer or an interned string. The derived order
/// (integers numerically, then strings lexicographically) is the total order
/// used for deterministic output.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Str(Arc<str>),
}

impl Value {
    pub fn str(s: &str) -> Value {
        Value::Str(Arc::from(s))
    }

    /// Parse a CSV token: integer-shaped tokens become `Int`.
    pub fn parse(tok: &str) -> Value {
        match tok.parse::<i64>() {
            Ok(i) => Value::Int(i),
            Err(_) => Value::str(tok),
        }
    }

    pub fn render(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Str(s) => s.to_string(),
        }
    }
}

impl std::fmt::Debug for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.render())
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Value {
        Value::Int(i)
    }
}

pub type Tuple = Box<[Value]>;

pub fn tuple_of(vals: &[i64]) -> Tuple {
    vals.iter().map(|&v| Value::Int(v)).collect()
}

/// A set of key tuples over a fixed sub-schema, used by (anti-)semi-joins
/// against computed heavy-key sets.
#[derive(Debug, Clone)]
pub struct KeySet {
    pub attrs: Vec<AttrId>,
    pub keys: std::collections::HashSet<Tuple>,
}

impl KeySet {
    pub fn new(attrs: Vec<AttrId>) -> KeySet {
        KeySet {
            attrs,
            keys: Default::default(),
        }
    }
    pub fn len(&self) -> usize {
        self.keys.len()
    }
    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Relation<E> {
    schema: Vec<AttrId>,
    rows: Vec<(Tuple, E)>,
}

impl<E: Clone> Relation<E> {
    pub fn empty(schema: Vec<AttrId>) -> Relation<E> {
        Relation {
            schema,
            rows: Vec::new(),
        }
    }

    /// Build from raw rows, merging duplicate tuples with ⊕.
    pub fn from_rows<S: Semiring<Elem = E>>(
        schema: Vec<AttrId>,
        raw: Vec<(Tuple, E)>,
        ring: &S,
    ) -> Result<Relation<E>> {
        let mut index: HashMap<Tuple, usize> = HashMap::with_capacity(raw.len());
        let mut rows: Vec<(Tuple, E)> = Vec::with_capacity(raw.len());
        for (t, w) in raw {
            if t.len() != schema.len() {
                return Err(Error::SchemaMismatch(format!(
                    "tuple arity {} does not match schema arity {}",
                    t.len(),
                    schema.len()
                )));
            }
            match index.get(&t) {
                Some(&i) => {
                    rows[i].1 = ring.plus(&rows[i].1, &w);
                }
                None => {
                    index.insert(t.clone(), rows.len());
                    rows.push((t, w));
                }
            }
        }
        Ok(Relation { schema, rows })
    }

    pub fn schema(&self) -> &[AttrId] {
        &self.schema
    }
    pub fn schema_set(&self) -> AttrSet {
        AttrSet::from_iter(self.schema.iter().copied())
    }
    pub fn rows(&self) -> &[(Tuple, E)] {
        &self.rows
    }
    pub fn len(&self) -> usize {
        self.rows.len()
    }
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn positions_of(&self, attrs: &[AttrId]) -> Result<Vec<usize>> {
        attrs
            .iter()
            .map(|a| {
                self.schema
                    .iter()
                    .position(|x| x == a)
                    .ok_or_else(|| Error::SchemaMismatch(format!("attribute #{a} not in schema")))
            })
            .collect()
    }

    /// Rows sorted by tuple value; canonical form for output and comparison.
    pub fn sorted(&self) -> Relation<E> {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        Relation {
            schema: self.schema.clone(),
            rows,
        }
    }

    /// Reorder columns to ascending attribute id, then sort rows.
    pub fn canonical(&self) -> Relation<E> {
        let mut order: Vec<usize> = (0..self.schema.len()).collect();
        order.sort_by_key(|&i| self.schema[i]);
        let schema: Vec<AttrId> = order.iter().map(|&i| self.schema[i]).collect();
        let mut rows: Vec<(Tuple, E)> = self
            .rows
            .iter()
            .map(|(t, w)| {
                (
                    order.iter().map(|&i| t[i].clone()).collect::<Tuple>(),
                    w.clone(),
                )
            })
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        Relation { schema, rows }
    }

    pub(crate) fn push_row(&mut self, t: Tuple, w: E) {
        self.rows.push((t, w));
    }

    pub(crate) fn set_annotation(&mut self, i: usize, w: E) {
        self.rows[i].1 = w;
    }
}

fn project_positions(row: &Tuple, pos: &[usize]) -> Tuple {
    pos.iter().map(|&i| row[i].clone()).collect()
}

/// Natural join. Result schema is `a`'s schema followed by `b`'s non-shared
/// attributes; annotations multiply with ⊗.
pub fn join<S: Semiring>(
    a: &Relation<S::Elem>,
    b: &Relation<S::Elem>,
    ring: &S,
    stats: &mut RunStats,
) -> Result<Relation<S::Elem>> {
    let common: Vec<AttrId> = a
        .schema
        .iter()
        .copied()
        .filter(|x| b.schema.contains(x))
        .collect();
    let a_pos = a.positions_of(&common)?;
    let b_pos = b.positions_of(&common)?;
    let b_extra: Vec<usize> = (0..b.schema.len())
        .filter(|&i| !common.contains(&b.schema[i]))
        .collect();
    let mut schema = a.schema.clone();
    schema.extend(b_extra.iter().map(|&i| b.schema[i]));

    let mut index: HashMap<Tuple, Vec<usize>> = HashMap::with_capacity(b.len());
    for (i, (t, _)) in b.rows.iter().enumerate() {
        index
            .entry(project_positions(t, &b_pos))
            .or_default()
            .push(i);
    }

    let mut out = Relation::empty(schema);
    for (ta, wa) in &a.rows {
        let key = project_positions(ta, &a_pos);
        if let Some(matches) = index.get(&key) {
            for &bi in matches {
                let (tb, wb) = &b.rows[bi];
                let mut t = Vec::with_capacity(ta.len() + b_extra.len());
                t.extend(ta.iter().cloned());
                t.extend(b_extra.iter().map(|&i| tb[i].clone()));
                stats.add_row()?;
                stats.add_ops(1);
                out.push_row(t.into_boxed_slice(), ring.times(wa, wb));
            }
        }
    }
    stats.finish_relation(out.len() as u64);
    Ok(out)
}

/// Rows of `a` whose projection on the common attributes appears in `b`.
/// Annotations are copied untouched. With no common attributes the predicate
/// is vacuous: the result is `a` when `b` is non-empty, empty otherwise.
pub fn semi_join<E: Clone>(
    a: &Relation<E>,
    b: &Relation<E>,
    stats: &mut RunStats,
) -> Result<Relation<E>> {
    let common: Vec<AttrId> = a
        .schema
        .iter()
        .copied()
        .filter(|x| b.schema.contains(x))
        .collect();
    if common.is_empty() {
        let out = if b.is_empty() {
            Relation::empty(a.schema.clone())
        } else {
            a.clone()
        };
        for _ in 0..out.len() {
            stats.add_row()?;
        }
        stats.finish_relation(out.len() as u64);
        return Ok(out);
    }
    let a_pos = a.positions_of(&common)?;
    let b_pos = b.positions_of(&common)?;
    let keys: std::collections::HashSet<Tuple> = b
        .rows
        .iter()
        .map(|(t, _)| project_positions(t, &b_pos))
        .collect();
    let mut out = Relation::empty(a.schema.clone());
    for (t, w) in &a.rows {
        if keys.contains(&project_positions(t, &a_pos)) {
            stats.add_row()?;
            out.push_row(t.clone(), w.clone());
        }
    }
    stats.finish_relation(out.len() as u64);
    Ok(out)
}

/// Rows of `a` whose projection on `keys.attrs` is in the key set.
pub fn semi_join_keys<E: Clone>(
    a: &Relation<E>,
    keys: &KeySet,
    stats: &mut RunStats,
) -> Result<Relation<E>> {
    filter_by_keys(a, keys, true, stats)
}

/// Rows of `a` not matching any key. Complement of [`semi_join_keys`].
pub fn anti_semi_join<E: Clone>(
    a: &Relation<E>,
    keys: &KeySet,
    stats: &mut RunStats,
) -> Result<Relation<E>> {
    filter_by_keys(a, keys, false, stats)
}

fn filter_by_keys<E: Clone>(
    a: &Relation<E>,
    keys: &KeySet,
    keep_matching: bool,
    stats: &mut RunStats,
) -> Result<Relation<E>> {
    let pos = a.positions_of(&keys.attrs)?;
    let mut out = Relation::empty(a.schema.clone());
    for (t, w) in &a.rows {
        if keys.keys.contains(&project_positions(t, &pos)) == keep_matching {
            stats.add_row()?;
            out.push_row(t.clone(), w.clone());
        }
    }
    stats.finish_relation(out.len() as u64);
    Ok(out)
}

/// Group rows by the retained attributes and ⊕-fold annotations per group.
pub fn project_aggregate<S: Semiring>(
    a: &Relation<S::Elem>,
    drop: AttrSet,
    ring: &S,
    stats: &mut RunStats,
) -> Result<Relation<S::Elem>> {
    let keep_pos: Vec<usize> = (0..a.schema.len())
        .filter(|&i| !drop.contains(a.schema[i]))
        .collect();
    if keep_pos.len() == a.schema.len() {
        for _ in 0..a.len() {
            stats.add_row()?;
        }
        stats.finish_relation(a.len() as u64);
        return Ok(a.clone());
    }
    let schema: Vec<AttrId> = keep_pos.iter().map(|&i| a.schema[i]).collect();
    let mut index: HashMap<Tuple, usize> = HashMap::with_capacity(a.len());
    let mut out = Relation::empty(schema);
    for (t, w) in &a.rows {
        let key = project_positions(t, &keep_pos);
        match index.get(&key) {
            Some(&i) => {
                stats.add_ops(1);
                out.rows[i].1 = ring.plus(&out.rows[i].1, w);
            }
            None => {
                stats.add_row()?;
                index.insert(key.clone(), out.rows.len());
                out.push_row(key, w.clone());
            }
        }
    }
    stats.finish_relation(out.len() as u64);
    Ok(out)
}

/// Distinct projection with every annotation set to `one`; used to derive
/// relations for tree bags that are not backed by an input relation.
pub fn project_distinct<S: Semiring>(
    a: &Relation<S::Elem>,
    keep: AttrSet,
    ring: &S,
    stats: &mut RunStats,
) -> Result<Relation<S::Elem>> {
    let keep_pos: Vec<usize> = (0..a.schema.len())
        .filter(|&i| keep.contains(a.schema[i]))
        .collect();
    let schema: Vec<AttrId> = keep_pos.iter().map(|&i| a.schema[i]).collect();
    let mut seen: std::collections::HashSet<Tuple> = Default::default();
    let mut out = Relation::empty(schema);
    for (t, _) in &a.rows {
        let key = project_positions(t, &keep_pos);
        if seen.insert(key.clone()) {
            stats.add_row()?;
            out.push_row(key, ring.one());
        }
    }
    stats.finish_relation(out.len() as u64);
    Ok(out)
}

/// Distinct keys of `a` on `attrs`, with per-key row counts.
pub fn key_counts<E>(a: &Relation<E>, attrs: &[AttrId]) -> Result<HashMap<Tuple, u64>>
where
    E: Clone,
{
    let pos = a.positions_of(attrs)?;
    let mut counts: HashMap<Tuple, u64> = HashMap::new();
    for (t, _) in &a.rows {
        *counts.entry(project_positions(t, &pos)).or_insert(0) += 1;
    }
    Ok(counts)
}
