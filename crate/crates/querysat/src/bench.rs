//! Solver benchmarking and cactus-plot series.

use std::collections::BTreeMap;

use querysat_core::graph::{Batch, FactorGraph};
use querysat_core::model::{evaluate_batch, Model};
use querysat_core::rng::{domain, stream};
use querysat_core::solvers::{dpll_solve, gsat_solve, GsatBudget, SolveStatus};
use querysat_core::train::evaluation_noise;
use querysat_core::CnfFormula;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::stamp::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchStatus {
    Sat,
    Unsat,
    Unknown,
    /// The step, flip, or decision budget ran out.
    Timeout,
}

impl BenchStatus {
    pub fn solved(self) -> bool {
        matches!(self, BenchStatus::Sat | BenchStatus::Unsat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub instance: usize,
    pub solver: String,
    pub status: BenchStatus,
    pub seconds: f64,
    /// Recurrent steps, flips, or branching decisions used.
    pub work: u64,
    pub exit_step: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum Solver<'m> {
    QuerySat { model: &'m Model, steps: usize },
    Gsat(GsatBudget),
    Dpll { decision_budget: u64 },
}

impl Solver<'_> {
    pub fn name(&self) -> String {
        match self {
            Solver::QuerySat { model, .. } => model.config().architecture.name().to_string(),
            Solver::Gsat(_) => "gsat".to_string(),
            Solver::Dpll { .. } => "dpll".to_string(),
        }
    }
}

/// Runs one solver on one instance. Randomness depends on `seed` and the
/// instance id only.
pub fn run_one(solver: &Solver<'_>, formula: &CnfFormula, graph: &FactorGraph, instance: usize, seed: u64, clock: Clock) -> BenchRecord {
    solve_one(solver, formula, graph, instance, seed, clock).0
}

/// [`run_one`] plus the satisfying assignment, when one was found.
pub fn solve_one(solver: &Solver<'_>, formula: &CnfFormula, graph: &FactorGraph, instance: usize, seed: u64, clock: Clock) -> (BenchRecord, Option<Vec<bool>>) {
    let watch = clock.start();
    let (status, work, exit_step, assignment) = match solver {
        Solver::QuerySat { model, steps } => {
            let batch = Batch::from_graphs(&[graph], vec![instance]);
            let mut noise = evaluation_noise(seed, batch.instance_ids(), model);
            let out = evaluate_batch(model, &batch, *steps, &mut noise, None);
            let status = if out.exit_steps[0].is_some() {
                BenchStatus::Sat
            } else {
                BenchStatus::Timeout
            };
            let assignment = out.exit_steps[0].map(|_| out.assignments[0].clone());
            (status, out.steps_run as u64, out.exit_steps[0], assignment)
        }
        Solver::Gsat(budget) => {
            let mut rng = stream(seed, &[domain::LOCAL_SEARCH, instance as u64]);
            let r = gsat_solve(formula, *budget, &mut rng);
            match r.status {
                SolveStatus::Sat(bits) => (BenchStatus::Sat, r.stats.flips, None, Some(bits)),
                _ => (BenchStatus::Timeout, r.stats.flips, None, None),
            }
        }
        Solver::Dpll { decision_budget } => {
            let r = dpll_solve(formula, *decision_budget);
            let decisions = r.stats.decisions;
            match r.status {
                SolveStatus::Sat(bits) => (BenchStatus::Sat, decisions, None, Some(bits)),
                SolveStatus::Unsat => (BenchStatus::Unsat, decisions, None, None),
                SolveStatus::Unknown => (BenchStatus::Timeout, decisions, None, None),
            }
        }
    };
    let record = BenchRecord {
        instance,
        solver: solver.name(),
        status,
        seconds: watch.seconds(),
        work,
        exit_step,
    };
    (record, assignment)
}

/// One record per (solver, instance), solver-major and in instance order
/// whatever the worker schedule.
pub fn run_bench(solvers: &[Solver<'_>], formulas: &[CnfFormula], seed: u64, clock: Clock) -> Vec<BenchRecord> {
    let graphs: Vec<FactorGraph> = formulas.iter().map(FactorGraph::new).collect();
    solvers
        .iter()
        .flat_map(|s| {
            (0..formulas.len())
                .into_par_iter()
                .map(|i| run_one(s, &formulas[i], &graphs[i], i, seed, clock))
                .collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CactusPoint {
    pub solver: String,
    pub solved_count: usize,
    pub cumulative_seconds: f64,
}

/// Cactus series: per solver (in order of first appearance), solved
/// instances sorted by time, ties by instance id, with running time sums.
pub fn cactus(records: &[BenchRecord]) -> Vec<CactusPoint> {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.solver.as_str()) {
            order.push(&r.solver);
        }
    }
    let mut out = Vec::new();
    for solver in order {
        let mut solved: Vec<&BenchRecord> = records.iter().filter(|r| r.solver == solver && r.status.solved()).collect();
        solved.sort_by(|a, b| a.seconds.total_cmp(&b.seconds).then(a.instance.cmp(&b.instance)));
        let mut total = 0.0;
        for (i, r) in solved.iter().enumerate() {
            total += r.seconds;
            out.push(CactusPoint {
                solver: solver.to_string(),
                solved_count: i + 1,
                cumulative_seconds: total,
            });
        }
    }
    out
}

/// Plot data: solver name to `[solved_count, cumulative_seconds]` pairs.
pub fn cactus_json(points: &[CactusPoint]) -> serde_json::Value {
    let mut series: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for p in points {
        series.entry(&p.solver).or_default().push((p.solved_count, p.cumulative_seconds));
    }
    serde_json::json!({ "x": "solved_count", "y": "cumulative_seconds", "series": series })
}
