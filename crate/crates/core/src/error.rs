//! Error types shared across the crate.

use thiserror::Error;

/// Report returned when GYO reduction stalls: the named relations form the
/// irreducible residue witnessing a cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CyclicReport {
    /// Edge ids of the relations left after ear removal stalled.
    pub residue: Vec<usize>,
    /// Relation names for the residue, for human-readable errors.
    pub residue_names: Vec<String>,
}

impl std::fmt::Display for CyclicReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "query is cyclic: GYO reduction stalled on {{{}}}",
            self.residue_names.join(", ")
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Parse(String),

    #[error("unknown attribute `{attr}` referenced by {context}{}", location.as_deref().map(|l| format!(" ({l})")).unwrap_or_default())]
    UnknownAttribute {
        attr: String,
        context: String,
        location: Option<String>,
    },

    #[error(transparent)]
    Cyclic(#[from] CyclicReport),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("query is not separated: {0}")]
    NotSeparated(String),

    #[error("query is not a line query: {0}")]
    NotLine(String),

    #[error("infeasible generator parameters: {0}")]
    InfeasibleParams(String),

    #[error("materialization budget exceeded")]
    BudgetExceeded,

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl std::error::Error for CyclicReport {}

pub type Result<T> = std::result::Result<T, Error>;
