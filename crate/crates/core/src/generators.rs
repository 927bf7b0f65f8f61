//! Random instance generators for k-SAT, 3-SAT at the phase transition,
//! triangle detection and graph coloring, with a satisfiability filter.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::RangeInclusive;
use core::str::FromStr;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{CnfFormula, Literal};
use crate::rng::{domain, stream, Rng};
use crate::solvers::{dpll_solve, SolveStatus, DEFAULT_DECISION_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "ksat")]
    KSat,
    #[serde(rename = "3sat")]
    ThreeSat,
    #[serde(rename = "3clique")]
    ThreeClique,
    #[serde(rename = "kcoloring")]
    KColoring,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::KSat, Task::ThreeSat, Task::ThreeClique, Task::KColoring];

    pub fn name(self) -> &'static str {
        match self {
            Task::KSat => "ksat",
            Task::ThreeSat => "3sat",
            Task::ThreeClique => "3clique",
            Task::KColoring => "kcoloring",
        }
    }

    /// Smallest size parameter the generator accepts.
    pub fn min_size(self) -> usize {
        match self {
            Task::KSat | Task::ThreeClique | Task::KColoring => 3,
            Task::ThreeSat => 5,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| GenError::UnknownTask(String::from(s)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("unknown task {0:?} (expected ksat, 3sat, 3clique or kcoloring)")]
    UnknownTask(String),
    #[error("size range {min}..={max} is empty or below the task minimum {floor}")]
    BadRange { min: usize, max: usize, floor: usize },
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("dataset generation stalled at instance {instance}: {unknown} of {candidates} candidates exhausted the solver budget")]
    Stalled { instance: usize, candidates: u64, unknown: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSpec {
    pub task: Task,
    pub min_size: usize,
    pub max_size: usize,
    pub count: usize,
    pub seed: u64,
}

impl GenSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.count == 0 {
            return Err(GenError::ZeroCount);
        }
        let floor = self.task.min_size();
        if self.min_size > self.max_size || self.min_size < floor {
            return Err(GenError::BadRange {
                min: self.min_size,
                max: self.max_size,
                floor,
            });
        }
        Ok(())
    }

    pub fn size_range(&self) -> RangeInclusive<usize> {
        self.min_size..=self.max_size
    }
}

/// Undirected simple graph; edges stored as `(u, w)` with `u < w`, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    v: usize,
    edges: Vec<(u32, u32)>,
    adjacency: Vec<bool>,
}

impl Graph {
    pub fn new(v: usize, edges: &[(usize, usize)]) -> Self {
        let mut adjacency = alloc::vec![false; v * v];
        let mut list = Vec::new();
        for &(a, b) in edges {
            assert!(a != b && a < v && b < v, "invalid edge ({a}, {b})");
            let (u, w) = (a.min(b), a.max(b));
            if !adjacency[u * v + w] {
                adjacency[u * v + w] = true;
                adjacency[w * v + u] = true;
                list.push((u as u32, w as u32));
            }
        }
        list.sort_unstable();
        Graph { v, edges: list, adjacency }
    }

    pub fn num_vertices(&self) -> usize {
        self.v
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn adjacent(&self, u: usize, w: usize) -> bool {
        self.adjacency[u * self.v + w]
    }

    pub fn is_connected(&self) -> bool {
        if self.v == 0 {
            return true;
        }
        let mut seen = alloc::vec![false; self.v];
        let mut stack = alloc::vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for w in 0..self.v {
                if !seen[w] && self.adjacent(u, w) {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Erdős–Rényi `G(v, p)`: every unordered pair independently with probability `p`.
pub fn gen_er_graph(v: usize, p: f64, rng: &mut Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..v {
        for w in u + 1..v {
            if rng.random_bool(p) {
                edges.push((u, w));
            }
        }
    }
    Graph::new(v, &edges)
}

/// Edge probability for the triangle task: `3^(1/3) / (v(v²-3v+2))^(1/3)`.
pub fn clique_edge_probability(v: usize) -> f64 {
    let v = v as f64;
    libm::cbrt(3.0) / libm::cbrt(v * (2.0 - 3.0 * v + v * v))
}

/// Edge probability for the coloring task: `1.2 ln v / v + 0.05`.
pub fn coloring_edge_probability(v: usize) -> f64 {
    let v = v as f64;
    1.2 * libm::log(v) / v + 0.05
}

/// Clause count at the 3-SAT phase transition: `⌊4.258n + 58.26n^(-2/3) + ½⌋`.
pub fn phase_clause_count(n: usize) -> usize {
    let nf = n as f64;
    libm::floor(4.258 * nf + 58.26 * libm::pow(nf, -2.0 / 3.0) + 0.5) as usize
}

fn neg(var: usize) -> Literal {
    Literal::from_var(var, true)
}

fn pos(var: usize) -> Literal {
    Literal::from_var(var, false)
}

/// Triangle-style clique encoding with variables `x[s][u]` (slot `s`,
/// vertex `u`) numbered `s·v + u + 1`. Satisfiable iff the graph has a
/// `k`-clique.
pub fn encode_kclique(graph: &Graph, k: usize) -> CnfFormula {
    let v = graph.num_vertices();
    assert!(k >= 2 && v >= k, "need k >= 2 and at least k vertices");
    let x = |s: usize, u: usize| s * v + u;
    let mut clauses: Vec<Vec<Literal>> = Vec::new();
    for s in 0..k {
        clauses.push((0..v).map(|u| pos(x(s, u))).collect());
        for u in 0..v {
            for w in u + 1..v {
                clauses.push(alloc::vec![neg(x(s, u)), neg(x(s, w))]);
            }
        }
    }
    for u in 0..v {
        for w in u + 1..v {
            if graph.adjacent(u, w) {
                continue;
            }
            for s in 0..k {
                for t in s + 1..k {
                    clauses.push(alloc::vec![neg(x(s, u)), neg(x(t, w))]);
                    clauses.push(alloc::vec![neg(x(s, w)), neg(x(t, u))]);
                }
            }
        }
    }
    for u in 0..v {
        for s in 0..k {
            for t in s + 1..k {
                clauses.push(alloc::vec![neg(x(s, u)), neg(x(t, u))]);
            }
        }
    }
    CnfFormula::new(k * v, clauses).expect("clique encoding is well formed")
}

/// Coloring encoding with variables `x[u][c]` numbered `u·k + c + 1`.
pub fn encode_kcoloring(graph: &Graph, k: usize) -> CnfFormula {
    let v = graph.num_vertices();
    assert!(k >= 2, "need at least two colors");
    let x = |u: usize, c: usize| u * k + c;
    let mut clauses: Vec<Vec<Literal>> = Vec::new();
    for u in 0..v {
        clauses.push((0..k).map(|c| pos(x(u, c))).collect());
        for c in 0..k {
            for d in c + 1..k {
                clauses.push(alloc::vec![neg(x(u, c)), neg(x(u, d))]);
            }
        }
    }
    for &(u, w) in graph.edges() {
        for c in 0..k {
            clauses.push(alloc::vec![neg(x(u as usize, c)), neg(x(w as usize, c))]);
        }
    }
    CnfFormula::new(v * k, clauses).expect("coloring encoding is well formed")
}

/// Clause width `1 + Bernoulli(0.7) + Geometric(0.4)` (geometric counted
/// from 1), capped at `num_vars`.
pub fn sample_clause_width(num_vars: usize, rng: &mut Rng) -> usize {
    let geometric = Geometric::new(0.4).expect("valid probability");
    let k = 1 + rng.random_bool(0.7) as usize + 1 + geometric.sample(rng) as usize;
    k.min(num_vars)
}

/// Clause over the given 0-based variables, negating where `negate` is set.
pub fn clause_from_draws(vars: &[usize], negate: &[bool]) -> Vec<Literal> {
    vars.iter().zip(negate).map(|(&v, &n)| Literal::from_var(v, n)).collect()
}

fn random_clause(num_vars: usize, k: usize, rng: &mut Rng) -> Vec<Literal> {
    let vars = sample(rng, num_vars, k).into_vec();
    let negate: Vec<bool> = (0..k).map(|_| rng.random_bool(0.5)).collect();
    clause_from_draws(&vars, &negate)
}

/// k-SAT: clauses of random width are appended until the formula first
/// stops being provably satisfiable; that last clause is dropped.
pub fn gen_ksat(num_vars: usize, rng: &mut Rng) -> CnfFormula {
    gen_ksat_with_budget(num_vars, DEFAULT_DECISION_BUDGET, rng)
}

pub fn gen_ksat_with_budget(num_vars: usize, decision_budget: u64, rng: &mut Rng) -> CnfFormula {
    assert!(num_vars >= 3, "k-SAT needs at least 3 variables");
    let mut clauses: Vec<Vec<Literal>> = Vec::new();
    let mut witness: Vec<bool> = alloc::vec![false; num_vars];
    loop {
        let k = sample_clause_width(num_vars, rng);
        let clause = random_clause(num_vars, k, rng);
        let still_witnessed = CnfFormula::clause_satisfied(&clause, &witness);
        clauses.push(clause);
        if still_witnessed {
            continue;
        }
        let candidate = CnfFormula::new(num_vars, clauses.clone()).expect("generated clauses are valid");
        match dpll_solve(&candidate, decision_budget).status {
            SolveStatus::Sat(w) => witness = w,
            SolveStatus::Unsat | SolveStatus::Unknown => {
                clauses.pop();
                return CnfFormula::new(num_vars, clauses).expect("generated clauses are valid");
            }
        }
    }
}

/// Uniform random 3-SAT with the phase-transition clause count.
pub fn gen_3sat_phase(num_vars: usize, rng: &mut Rng) -> CnfFormula {
    assert!(num_vars >= 5, "3-SAT generation needs at least 5 variables");
    let m = phase_clause_count(num_vars);
    let clauses = (0..m).map(|_| random_clause(num_vars, 3, rng)).collect();
    CnfFormula::new(num_vars, clauses).expect("generated clauses are valid")
}

/// One accepted instance with its provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedInstance {
    pub index: usize,
    pub formula: CnfFormula,
    /// Variables for SAT tasks, vertices for graph tasks.
    pub size: usize,
    /// Clique size or color count for graph tasks.
    pub k: Option<usize>,
    /// Seed of the instance's own random stream.
    pub seed: u64,
    pub rejected_unsat: u64,
    pub rejected_unknown: u64,
    pub rejected_disconnected: u64,
}

/// Candidates before the stall check is applied.
const STALL_MIN_CANDIDATES: u64 = 20;
const STALL_FRACTION: f64 = 0.95;

/// Rejection-samples instance `index` of `spec`. The instance's random
/// stream depends only on `(spec.seed, index)`.
pub fn generate_instance(spec: &GenSpec, index: usize, decision_budget: u64) -> Result<GeneratedInstance, GenError> {
    spec.validate()?;
    let seed = crate::rng::derive_seed(spec.seed, &[domain::INSTANCE, index as u64]);
    let mut rng = stream(spec.seed, &[domain::INSTANCE, index as u64]);
    let mut out = GeneratedInstance {
        index,
        formula: CnfFormula::new(1, Vec::new()).unwrap(),
        size: 0,
        k: None,
        seed,
        rejected_unsat: 0,
        rejected_unknown: 0,
        rejected_disconnected: 0,
    };
    let mut candidates = 0u64;
    loop {
        let size = rng.random_range(spec.size_range());
        let (formula, k) = match spec.task {
            Task::KSat => (gen_ksat_with_budget(size, decision_budget, &mut rng), None),
            Task::ThreeSat => (gen_3sat_phase(size, &mut rng), None),
            Task::ThreeClique => {
                let g = gen_er_graph(size, clique_edge_probability(size), &mut rng);
                (encode_kclique(&g, 3), Some(3))
            }
            Task::KColoring => {
                let k = rng.random_range(3..=5);
                let g = gen_er_graph(size, coloring_edge_probability(size), &mut rng);
                if !g.is_connected() {
                    out.rejected_disconnected += 1;
                    continue;
                }
                (encode_kcoloring(&g, k), Some(k))
            }
        };
        candidates += 1;
        match dpll_solve(&formula, decision_budget).status {
            SolveStatus::Sat(_) => {
                out.formula = formula;
                out.size = size;
                out.k = k;
                return Ok(out);
            }
            SolveStatus::Unsat => out.rejected_unsat += 1,
            SolveStatus::Unknown => out.rejected_unknown += 1,
        }
        if candidates >= STALL_MIN_CANDIDATES && out.rejected_unknown as f64 > STALL_FRACTION * candidates as f64 {
            return Err(GenError::Stalled {
                instance: index,
                candidates,
                unknown: out.rejected_unknown,
            });
        }
    }
}

/// All `spec.count` instances in index order.
pub fn generate(spec: &GenSpec, decision_budget: u64) -> Result<Vec<GeneratedInstance>, GenError> {
    spec.validate()?;
    (0..spec.count).map(|i| generate_instance(spec, i, decision_budget)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn phase_counts() {
        assert_eq!(phase_clause_count(50), 217);
        assert_eq!(phase_clause_count(100), 429);
    }

    #[test]
    fn edge_probabilities() {
        assert!((clique_edge_probability(10) - 0.16091).abs() < 1e-5);
        assert!((coloring_edge_probability(10) - 0.32631).abs() < 1e-5);
    }

    #[test]
    fn forced_clause() {
        let c = clause_from_draws(&[0, 1, 2], &[false, false, false]);
        let ints: Vec<i32> = c.iter().map(|l| l.value()).collect();
        assert_eq!(ints, vec![1, 2, 3]);
    }

    #[test]
    fn er_boundaries() {
        let mut rng = stream(1, &[]);
        assert!(gen_er_graph(6, 0.0, &mut rng).edges().is_empty());
        assert_eq!(gen_er_graph(6, 1.0, &mut rng).edges().len(), 15);
    }

    #[test]
    fn encoding_sizes() {
        let tri = Graph::new(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(encode_kclique(&tri, 3).num_vars(), 9);
        assert_eq!(encode_kcoloring(&tri, 4).num_vars(), 12);
    }

    #[test]
    fn task_names_round_trip() {
        for t in Task::ALL {
            assert_eq!(t.name().parse::<Task>().unwrap(), t);
        }
        assert!("4sat".parse::<Task>().is_err());
    }

    #[test]
    fn connectivity() {
        assert!(Graph::new(3, &[(0, 1), (1, 2)]).is_connected());
        assert!(!Graph::new(3, &[(0, 1)]).is_connected());
    }
}
