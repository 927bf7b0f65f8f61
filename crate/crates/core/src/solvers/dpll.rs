//! DPLL with watched-literal unit propagation and pure-literal elimination.
//! Backtracking is chronological; nothing is learned.

use alloc::vec;
use alloc::vec::Vec;

use super::{SolveResult, SolveStats, SolveStatus};
use crate::cnf::CnfFormula;

pub const DEFAULT_DECISION_BUDGET: u64 = 1_000_000;

const UNASSIGNED: i8 = -1;

/// Literal code: `2·var + negated`.
#[inline]
fn code(var: usize, negated: bool) -> u32 {
    (2 * var + negated as usize) as u32
}

struct Frame {
    trail_start: usize,
    decision: u32,
    flipped: bool,
}

struct Solver {
    clauses: Vec<Vec<u32>>,
    watches: Vec<Vec<u32>>,
    value: Vec<i8>,
    trail: Vec<u32>,
    qhead: usize,
    frames: Vec<Frame>,
    stats: SolveStats,
}

impl Solver {
    #[inline]
    fn lit_value(&self, lit: u32) -> i8 {
        let v = self.value[(lit >> 1) as usize];
        if v == UNASSIGNED {
            UNASSIGNED
        } else {
            v ^ (lit & 1) as i8
        }
    }

    fn assign(&mut self, lit: u32) {
        self.value[(lit >> 1) as usize] = 1 ^ (lit & 1) as i8;
        self.trail.push(lit);
    }

    /// Returns false on conflict.
    fn propagate(&mut self) -> bool {
        while self.qhead < self.trail.len() {
            let falsified = self.trail[self.qhead] ^ 1;
            self.qhead += 1;
            let mut watchers = core::mem::take(&mut self.watches[falsified as usize]);
            let mut keep = 0;
            let mut conflict = false;
            let mut i = 0;
            while i < watchers.len() {
                let ci = watchers[i] as usize;
                i += 1;
                if conflict {
                    watchers[keep] = ci as u32;
                    keep += 1;
                    continue;
                }
                let clause = &mut self.clauses[ci];
                if clause[0] == falsified {
                    clause.swap(0, 1);
                }
                let other = clause[0];
                let other_val = {
                    let v = self.value[(other >> 1) as usize];
                    if v == UNASSIGNED {
                        UNASSIGNED
                    } else {
                        v ^ (other & 1) as i8
                    }
                };
                if other_val == 1 {
                    watchers[keep] = ci as u32;
                    keep += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..clause.len() {
                    let l = clause[k];
                    let v = self.value[(l >> 1) as usize];
                    if v == UNASSIGNED || v ^ (l & 1) as i8 == 1 {
                        clause.swap(1, k);
                        self.watches[clause[1] as usize].push(ci as u32);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                watchers[keep] = ci as u32;
                keep += 1;
                if other_val == 0 {
                    conflict = true;
                } else {
                    self.stats.propagations += 1;
                    self.assign(other);
                }
            }
            watchers.truncate(keep);
            self.watches[falsified as usize] = watchers;
            if conflict {
                return false;
            }
        }
        true
    }

    fn undo_to(&mut self, len: usize) {
        for &lit in &self.trail[len..] {
            self.value[(lit >> 1) as usize] = UNASSIGNED;
        }
        self.trail.truncate(len);
        self.qhead = len;
    }

    /// Flips the most recent untried decision. Returns false when none is left.
    fn backtrack(&mut self) -> bool {
        while let Some(frame) = self.frames.pop() {
            self.undo_to(frame.trail_start);
            if !frame.flipped {
                let lit = frame.decision ^ 1;
                self.frames.push(Frame {
                    trail_start: frame.trail_start,
                    decision: lit,
                    flipped: true,
                });
                self.assign(lit);
                return true;
            }
        }
        false
    }

    /// Assigns pure literals and picks a branching literal. `None` means every
    /// clause is satisfied.
    fn pure_literals_and_branch(&mut self, num_vars: usize) -> Option<u32> {
        let mut counts = vec![0u32; 2 * num_vars];
        for clause in &self.clauses {
            if clause.iter().any(|&l| self.lit_value(l) == 1) {
                continue;
            }
            for &l in clause {
                if self.lit_value(l) == UNASSIGNED {
                    counts[l as usize] += 1;
                }
            }
        }
        let mut best: Option<(u32, usize)> = None;
        let mut any_open = false;
        for var in 0..num_vars {
            let (p, n) = (counts[2 * var], counts[2 * var + 1]);
            if p + n == 0 {
                continue;
            }
            any_open = true;
            if n == 0 {
                self.assign(code(var, false));
            } else if p == 0 {
                self.assign(code(var, true));
            } else if best.is_none_or(|(c, _)| p + n > c) {
                best = Some((p + n, var));
            }
        }
        if !any_open {
            return None;
        }
        match best {
            Some((_, var)) => Some(code(var, false)),
            // only pure literals were open; they satisfy everything left
            None => Some(u32::MAX),
        }
    }
}

/// Decides `formula` within `decision_budget` branching decisions.
pub fn dpll_solve(formula: &CnfFormula, decision_budget: u64) -> SolveResult {
    let n = formula.num_vars();
    let mut solver = Solver {
        clauses: Vec::with_capacity(formula.num_clauses()),
        watches: vec![Vec::new(); 2 * n],
        value: vec![UNASSIGNED; n],
        trail: Vec::with_capacity(n),
        qhead: 0,
        frames: Vec::new(),
        stats: SolveStats::default(),
    };
    let mut units = Vec::new();
    for clause in formula.clauses() {
        let mut lits: Vec<u32> = clause.iter().map(|l| code(l.var(), l.is_negated())).collect();
        lits.sort_unstable();
        lits.dedup();
        if lits.windows(2).any(|w| w[0] ^ 1 == w[1]) {
            continue; // tautology
        }
        if lits.len() == 1 {
            units.push(lits[0]);
            continue;
        }
        let ci = solver.clauses.len() as u32;
        solver.watches[lits[0] as usize].push(ci);
        solver.watches[lits[1] as usize].push(ci);
        solver.clauses.push(lits);
    }
    let unsat = |stats| SolveResult {
        status: SolveStatus::Unsat,
        stats,
    };
    for u in units {
        match solver.lit_value(u) {
            1 => {}
            0 => return unsat(solver.stats),
            _ => solver.assign(u),
        }
    }

    let mut ok = solver.propagate();
    loop {
        if !ok {
            if !solver.backtrack() {
                return unsat(solver.stats);
            }
            ok = solver.propagate();
            continue;
        }
        match solver.pure_literals_and_branch(n) {
            None => break,
            Some(u32::MAX) => {
                ok = solver.propagate();
            }
            Some(lit) => {
                if solver.stats.decisions >= decision_budget {
                    return SolveResult {
                        status: SolveStatus::Unknown,
                        stats: solver.stats,
                    };
                }
                solver.stats.decisions += 1;
                solver.frames.push(Frame {
                    trail_start: solver.trail.len(),
                    decision: lit,
                    flipped: false,
                });
                solver.assign(lit);
                ok = solver.propagate();
            }
        }
    }
    let witness: Vec<bool> = solver.value.iter().map(|&v| v == 1).collect();
    debug_assert!(formula.is_satisfied_by(&witness));
    SolveResult {
        status: SolveStatus::Sat(witness),
        stats: solver.stats,
    }
}
