//! Query introspection: how the discretized query relates to the formula,
//! to the model's own answer, and to the previous query.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::FactorGraph;
use crate::model::{Model, StepView};
use crate::train::{evaluate, TrainError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbeError {
    #[error("architecture {0} has no query")]
    NoQuery(&'static str),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Percentages for one instance, taken at the last step it was run.
/// The `_mean` fields average the same quantity over all query columns;
/// the others read query column 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InstanceProbe {
    pub query_logit_match: f64,
    pub query_sat_clause_fraction: f64,
    /// `None` when the instance stopped after its first step.
    pub consecutive_query_match: Option<f64>,
    pub query_logit_match_mean: f64,
    pub query_sat_clause_fraction_mean: f64,
    pub consecutive_query_match_mean: Option<f64>,
}

/// Per-instance percentages averaged over instances.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub instances: usize,
    pub query_logit_match: f64,
    pub query_sat_clause_fraction: f64,
    pub consecutive_query_match: f64,
    pub query_logit_match_mean: f64,
    pub query_sat_clause_fraction_mean: f64,
    pub consecutive_query_match_mean: f64,
    pub solved_fraction: f64,
}

/// Percentage of positions where `a` and `b` agree.
pub fn match_percent(a: &[bool], b: &[bool]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 100.0;
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    100.0 * same as f64 / a.len() as f64
}

/// Percentage of the graph's clauses that `bits` satisfies.
pub fn sat_clause_percent(graph: &FactorGraph, bits: &[bool]) -> f64 {
    let m = graph.num_clauses();
    if m == 0 {
        return 100.0;
    }
    let sat = (0..m).filter(|&c| graph.clause_satisfied(c, bits)).count();
    100.0 * sat as f64 / m as f64
}

struct Tracker {
    /// Discretized query columns at the previous step, per column.
    prev: Option<Vec<Vec<bool>>>,
    latest: InstanceProbe,
    done: bool,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn observe(view: &StepView<'_>, graphs: &[FactorGraph], trackers: &mut [Tracker]) {
    let query = view.query.expect("probed architectures have a query");
    for (k, &id) in view.batch.instance_ids().iter().enumerate() {
        let t = &mut trackers[id];
        if t.done {
            continue;
        }
        let rows = view.batch.var_range(k);
        let columns: Vec<Vec<bool>> = (0..query.cols()).map(|j| rows.clone().map(|r| query.get(r, j) >= 0.5).collect()).collect();
        let best: Vec<bool> = rows.clone().map(|r| view.outputs.get(r, view.best[k]) >= 0.5).collect();
        let graph = &graphs[id];
        let logit = |c: &Vec<bool>| match_percent(c, &best);
        let sat = |c: &Vec<bool>| sat_clause_percent(graph, c);
        let consecutive = t.prev.as_ref().map(|prev| {
            let per: Vec<f64> = prev.iter().zip(&columns).map(|(p, c)| match_percent(p, c)).collect();
            (per[0], mean(per.iter().copied()))
        });
        t.latest = InstanceProbe {
            query_logit_match: logit(&columns[0]),
            query_sat_clause_fraction: sat(&columns[0]),
            consecutive_query_match: consecutive.map(|c| c.0),
            query_logit_match_mean: mean(columns.iter().map(logit)),
            query_sat_clause_fraction_mean: mean(columns.iter().map(sat)),
            consecutive_query_match_mean: consecutive.map(|c| c.1),
        };
        t.prev = Some(columns);
        t.done = view.solved[k];
    }
}

/// Runs evaluation on `graphs` and records the probe percentages of every
/// instance at the last step it took part in.
pub fn probe(model: &Model, graphs: &[FactorGraph], steps: usize, node_budget: usize, seed: u64) -> Result<(Vec<InstanceProbe>, f64), ProbeError> {
    let arch = model.config().architecture;
    if !arch.has_query() {
        return Err(ProbeError::NoQuery(arch.name()));
    }
    let mut trackers: Vec<Tracker> = graphs
        .iter()
        .map(|_| Tracker {
            prev: None,
            latest: InstanceProbe::default(),
            done: false,
        })
        .collect();
    let mut obs = |v: &StepView<'_>| observe(v, graphs, &mut trackers);
    let eval = evaluate(model, graphs, steps, node_budget, seed, Some(&mut obs))?;
    Ok((trackers.into_iter().map(|t| t.latest).collect(), eval.solved_fraction()))
}

/// Averages per-instance percentages; instances without two steps are left
/// out of the consecutive-query averages.
pub fn summarize(probes: &[InstanceProbe], solved_fraction: f64) -> ProbeSummary {
    ProbeSummary {
        instances: probes.len(),
        query_logit_match: mean(probes.iter().map(|p| p.query_logit_match)),
        query_sat_clause_fraction: mean(probes.iter().map(|p| p.query_sat_clause_fraction)),
        consecutive_query_match: mean(probes.iter().filter_map(|p| p.consecutive_query_match)),
        query_logit_match_mean: mean(probes.iter().map(|p| p.query_logit_match_mean)),
        query_sat_clause_fraction_mean: mean(probes.iter().map(|p| p.query_sat_clause_fraction_mean)),
        consecutive_query_match_mean: mean(probes.iter().filter_map(|p| p.consecutive_query_match_mean)),
        solved_fraction,
    }
}
