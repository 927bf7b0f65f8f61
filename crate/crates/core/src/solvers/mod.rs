//! Classical baselines: GSAT local search and a DPLL complete solver.

mod dpll;
mod gsat;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use dpll::{dpll_solve, DEFAULT_DECISION_BUDGET};
pub use gsat::{gsat_solve, GsatBudget};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "assignment")]
pub enum SolveStatus {
    Sat(Vec<bool>),
    Unsat,
    Unknown,
}

impl SolveStatus {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolveStatus::Sat(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Sat(_) => "sat",
            SolveStatus::Unsat => "unsat",
            SolveStatus::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub decisions: u64,
    pub propagations: u64,
    pub flips: u64,
    pub tries: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub stats: SolveStats,
}
