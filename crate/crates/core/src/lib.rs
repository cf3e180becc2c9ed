//! Evaluation of join-aggregate queries over commutative semirings.
//!
//! A query is a hypergraph with output attributes; relations carry one
//! annotation per tuple, and evaluation aggregates the ⊗-products of joining
//! annotations with ⊕ per output tuple. The crate provides:
//!
//! * structural analysis: acyclicity via GYO, ∃-connectivity, cleansed /
//!   separated / a-hierarchical classification, and the width measures
//!   freew ≤ fn-fhtw ≤ projw ([`width`]);
//! * engines: classic Yannakakis over a rooted join tree ([`mod@yannakakis`]),
//!   a two-plan partition algorithm for line queries ([`mod@line`]), and the
//!   output-sensitive hybrid engine for separated acyclic queries
//!   ([`hybrid`]);
//! * a driver that cleanses, separates, dispatches per ∃-component, and
//!   recombines, including a doubling-guess wrapper when the output size is
//!   unknown ([`driver`]);
//! * a brute-force reference evaluator and instance generators, including
//!   adversarial families on which the classic algorithm degrades
//!   ([`oracle`], [`generators`]);
//! * text formats for query files, relation CSVs, and result CSVs ([`io`]).

#![forbid(unsafe_code)]

pub mod decomposition;
pub mod driver;
pub mod error;
pub mod fixtures;
pub mod generators;
pub mod hybrid;
pub mod instance;
pub mod io;
pub mod line;
pub mod oracle;
pub mod query;
pub mod relation;
pub mod semiring;
pub mod stats;
pub mod width;
pub mod yannakakis;

pub use decomposition::{gyo_join_tree, separated_join_tree, JoinTree, NodeId, SubtreeView};
pub use driver::{cleanse, evaluate, run_with_doubling, separate, Algorithm, RewriteLog};
pub use error::{CyclicReport, Error, Result};
pub use hybrid::{hybrid_yannakakis, EdgeLabel, PartitionTask};
pub use instance::{full_reducer, merge_results, Instance, ResultSet};
pub use line::{detect_line, kmv_estimate_line, run_line, LineShape};
pub use oracle::brute_force;
pub use query::{AttrId, AttrSet, EdgeId, Hyperedge, Query};
pub use relation::{Relation, Tuple, Value};
pub use semiring::{Boolean, Counting, Instrumented, MaxProd, Semiring, SumProd};
pub use stats::RunStats;
pub use width::{analyze, fn_fhtw, freew, projw, rho_star_acyclic, WidthReport};
pub use yannakakis::{yannakakis, yannakakis_subquery};
