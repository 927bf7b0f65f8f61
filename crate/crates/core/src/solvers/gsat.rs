//! GSAT: greedy flips maximizing `make - break`, uniform tie-breaking,
//! random restarts.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{SolveResult, SolveStats, SolveStatus};
use crate::cnf::CnfFormula;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GsatBudget {
    pub max_flips: u64,
    pub max_tries: u64,
}

impl Default for GsatBudget {
    /// 500k flips split over 10 tries.
    fn default() -> Self {
        GsatBudget {
            max_flips: 50_000,
            max_tries: 10,
        }
    }
}

const RECOUNT_INTERVAL: u64 = 1000;

struct State<'f> {
    /// clause -> literal codes `2·var + negated`
    clauses: &'f [Vec<u32>],
    /// var -> (clause, negated) occurrences
    occurs: &'f [Vec<(u32, bool)>],
    assign: Vec<bool>,
    num_true: Vec<u32>,
    score: Vec<i64>,
    unsat: usize,
    buckets: Buckets,
}

/// Variables grouped by score for O(1) access to the best group.
struct Buckets {
    offset: i64,
    members: Vec<Vec<u32>>,
    pos: Vec<u32>,
    top: usize,
}

impl Buckets {
    fn new(offset: i64, num_vars: usize) -> Self {
        Buckets {
            offset,
            members: vec![Vec::new(); (2 * offset + 1) as usize],
            pos: vec![0; num_vars],
            top: 0,
        }
    }

    fn insert(&mut self, var: u32, score: i64) {
        let b = (score + self.offset) as usize;
        self.pos[var as usize] = self.members[b].len() as u32;
        self.members[b].push(var);
        self.top = self.top.max(b);
    }

    fn remove(&mut self, var: u32, score: i64) {
        let b = (score + self.offset) as usize;
        let p = self.pos[var as usize] as usize;
        let last = *self.members[b].last().unwrap();
        self.members[b].swap_remove(p);
        if last != var {
            self.pos[last as usize] = p as u32;
        }
    }

    fn best(&mut self) -> &[u32] {
        while self.members[self.top].is_empty() {
            self.top -= 1;
        }
        &self.members[self.top]
    }
}

#[inline]
fn lit_true(lit: u32, assign: &[bool]) -> bool {
    assign[(lit >> 1) as usize] != (lit & 1 == 1)
}

impl<'f> State<'f> {
    fn new(clauses: &'f [Vec<u32>], occurs: &'f [Vec<(u32, bool)>], assign: Vec<bool>, max_occ: i64) -> Self {
        let n = assign.len();
        let mut s = State {
            clauses,
            occurs,
            assign,
            num_true: vec![0; clauses.len()],
            score: vec![0; n],
            unsat: 0,
            buckets: Buckets::new(max_occ, n),
        };
        s.recount();
        for v in 0..n {
            s.buckets.insert(v as u32, s.score[v]);
        }
        s
    }

    /// From-scratch clause counts and scores.
    fn recount(&mut self) {
        self.score.iter_mut().for_each(|x| *x = 0);
        self.unsat = 0;
        for (c, clause) in self.clauses.iter().enumerate() {
            let t = clause.iter().filter(|&&l| lit_true(l, &self.assign)).count() as u32;
            self.num_true[c] = t;
            if t == 0 {
                self.unsat += 1;
                for &l in clause {
                    self.score[(l >> 1) as usize] += 1;
                }
            } else if t == 1 {
                let l = clause.iter().find(|&&l| lit_true(l, &self.assign)).unwrap();
                self.score[(l >> 1) as usize] -= 1;
            }
        }
    }

    fn bump(&mut self, var: usize, delta: i64) {
        self.buckets.remove(var as u32, self.score[var]);
        self.score[var] += delta;
        self.buckets.insert(var as u32, self.score[var]);
    }

    fn flip(&mut self, v: usize) {
        self.assign[v] = !self.assign[v];
        let occurs = self.occurs;
        let clauses = self.clauses;
        for &(c, negated) in &occurs[v] {
            let c = c as usize;
            let became_true = self.assign[v] != negated;
            let t = self.num_true[c];
            let clause = &clauses[c];
            if became_true {
                self.num_true[c] = t + 1;
                if t == 0 {
                    self.unsat -= 1;
                    self.bump(v, -2);
                    for &l in clause {
                        let w = (l >> 1) as usize;
                        if w != v {
                            self.bump(w, -1);
                        }
                    }
                } else if t == 1 {
                    // the previously sole true literal no longer breaks the clause
                    let w = clause.iter().find(|&&l| (l >> 1) as usize != v && lit_true(l, &self.assign)).unwrap() >> 1;
                    self.bump(w as usize, 1);
                }
            } else {
                self.num_true[c] = t - 1;
                if t == 1 {
                    self.unsat += 1;
                    self.bump(v, 2);
                    for &l in clause {
                        let w = (l >> 1) as usize;
                        if w != v {
                            self.bump(w, 1);
                        }
                    }
                } else if t == 2 {
                    let w = clause.iter().find(|&&l| lit_true(l, &self.assign)).unwrap() >> 1;
                    self.bump(w as usize, -1);
                }
            }
        }
    }
}

/// Runs GSAT. Never reports `Unsat`.
pub fn gsat_solve(formula: &CnfFormula, budget: GsatBudget, rng: &mut Rng) -> SolveResult {
    let n = formula.num_vars();
    let mut clauses: Vec<Vec<u32>> = Vec::with_capacity(formula.num_clauses());
    let mut occurs: Vec<Vec<(u32, bool)>> = vec![Vec::new(); n];
    for clause in formula.clauses() {
        let mut lits: Vec<u32> = clause.iter().map(|l| (2 * l.var() + l.is_negated() as usize) as u32).collect();
        lits.sort_unstable();
        lits.dedup();
        if lits.windows(2).any(|w| w[0] ^ 1 == w[1]) {
            continue; // tautologies are always satisfied and never change a score
        }
        let c = clauses.len() as u32;
        for &l in &lits {
            occurs[(l >> 1) as usize].push((c, l & 1 == 1));
        }
        clauses.push(lits);
    }
    let max_occ = occurs.iter().map(Vec::len).max().unwrap_or(0) as i64;
    let mut stats = SolveStats::default();
    for _ in 0..budget.max_tries {
        stats.tries += 1;
        let assign: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let mut state = State::new(&clauses, &occurs, assign, max_occ);
        let mut flips = 0;
        loop {
            if state.unsat == 0 {
                debug_assert!(formula.is_satisfied_by(&state.assign));
                return SolveResult {
                    status: SolveStatus::Sat(state.assign),
                    stats,
                };
            }
            if flips == budget.max_flips || n == 0 {
                break;
            }
            let best = state.buckets.best();
            let v = best[rng.random_range(0..best.len())] as usize;
            state.flip(v);
            flips += 1;
            stats.flips += 1;
            if cfg!(debug_assertions) && flips % RECOUNT_INTERVAL == 0 {
                let (unsat, score) = (state.unsat, state.score.clone());
                state.recount();
                assert_eq!((unsat, &score), (state.unsat, &state.score), "incremental bookkeeping drifted");
            }
        }
    }
    SolveResult {
        status: SolveStatus::Unknown,
        stats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn unit_formula_within_two_flips() {
        let f = CnfFormula::from_ints(2, &[&[1], &[2]]).unwrap();
        for seed in 0..20 {
            let r = gsat_solve(&f, GsatBudget { max_flips: 2, max_tries: 1 }, &mut stream(seed, &[]));
            assert!(r.status.is_sat());
            assert!(r.stats.flips <= 2);
        }
    }

    #[test]
    fn contradiction_is_unknown() {
        let f = CnfFormula::from_ints(1, &[&[1], &[-1]]).unwrap();
        let r = gsat_solve(&f, GsatBudget { max_flips: 100, max_tries: 3 }, &mut stream(1, &[]));
        assert_eq!(r.status, SolveStatus::Unknown);
        assert_eq!(r.stats.flips, 300);
    }

    #[test]
    fn incremental_scores_match_recount_every_flip() {
        let f = CnfFormula::from_ints(4, &[&[1, -2, 3], &[-1, 2], &[2, 3, -4], &[-3, 4], &[1, 4], &[-1, -4]]).unwrap();
        let clauses: Vec<Vec<u32>> = f
            .clauses()
            .iter()
            .map(|c| c.iter().map(|l| (2 * l.var() + l.is_negated() as usize) as u32).collect())
            .collect();
        let mut occurs = vec![Vec::new(); 4];
        for (c, cl) in clauses.iter().enumerate() {
            for &l in cl {
                occurs[(l >> 1) as usize].push((c as u32, l & 1 == 1));
            }
        }
        let mut rng = stream(3, &[]);
        let mut s = State::new(&clauses, &occurs, vec![false; 4], 6);
        for _ in 0..200 {
            s.flip(rng.random_range(0..4));
            let (u, sc) = (s.unsat, s.score.clone());
            s.recount();
            assert_eq!((u, sc), (s.unsat, s.score.clone()));
        }
    }
}
