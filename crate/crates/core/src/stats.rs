//! Per-run instrumentation: rows materialized and semiring work.
//!
//! Every kernel operation that builds a new relation reports its output rows
//! here. `max_intermediate_rows` is the size of the largest single relation a
//! run materialized; it is the measurable proxy for intermediate join size.
//! An optional budget turns the counters into an abort mechanism for the
//! doubling-guess wrapper: once total materialization crosses the budget the
//! current trial fails fast with [`Error::BudgetExceeded`].

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunStats {
    pub max_intermediate_rows: u64,
    pub total_rows_materialized: u64,
    pub semiring_ops: u64,
    #[serde(skip)]
    budget: Option<u64>,
}

impl RunStats {
    pub fn new() -> RunStats {
        RunStats::default()
    }

    pub fn with_budget(limit: u64) -> RunStats {
        RunStats {
            budget: Some(limit),
            ..RunStats::default()
        }
    }

    /// Count one materialized row, failing when over budget.
    #[inline]
    pub fn add_row(&mut self) -> Result<()> {
        self.total_rows_materialized += 1;
        if let Some(limit) = self.budget {
            if self.total_rows_materialized > limit {
                return Err(Error::BudgetExceeded);
            }
        }
        Ok(())
    }

    /// Record the final size of a materialized relation.
    #[inline]
    pub fn finish_relation(&mut self, rows: u64) {
        if rows > self.max_intermediate_rows {
            self.max_intermediate_rows = rows;
        }
    }

    #[inline]
    pub fn add_ops(&mut self, n: u64) {
        self.semiring_ops += n;
    }

    /// Fold another run's counters into this one (budget is kept).
    pub fn absorb(&mut self, other: &RunStats) {
        self.max_intermediate_rows = self.max_intermediate_rows.max(other.max_intermediate_rows);
        self.total_rows_materialized += other.total_rows_materialized;
        self.semiring_ops += other.semiring_ops;
    }
}
