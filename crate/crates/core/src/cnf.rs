//! CNF formulas, literals and (relaxed) assignments.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CnfError {
    #[error("literal 0 is not a valid literal")]
    ZeroLiteral,
    #[error("literal {literal} exceeds declared variable count {num_vars}")]
    LiteralOutOfRange { literal: i32, num_vars: usize },
    #[error("clause {clause} is empty")]
    EmptyClause { clause: usize },
    #[error("clause {clause} repeats literal {literal}")]
    DuplicateLiteral { clause: usize, literal: i32 },
    #[error("formula must have at least one variable")]
    NoVariables,
    #[error("assignment has {got} values but formula has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },
    #[error("assignment value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error("clause index {index} out of range for {num_clauses} clauses")]
    ClauseIndex { index: usize, num_clauses: usize },
}

/// A signed, 1-based variable reference. The sign carries the polarity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct Literal(i32);

impl Literal {
    pub fn new(value: i32) -> Result<Self, CnfError> {
        if value == 0 {
            return Err(CnfError::ZeroLiteral);
        }
        Ok(Literal(value))
    }

    /// Literal for 0-based variable `var`.
    pub fn from_var(var: usize, negated: bool) -> Self {
        let v = var as i32 + 1;
        Literal(if negated { -v } else { v })
    }

    pub fn value(self) -> i32 {
        self.0
    }

    /// 0-based variable index.
    pub fn var(self) -> usize {
        self.0.unsigned_abs() as usize - 1
    }

    pub fn is_negated(self) -> bool {
        self.0 < 0
    }

    pub fn negate(self) -> Self {
        Literal(-self.0)
    }

    /// Truth value under a Boolean assignment indexed by 0-based variable.
    pub fn eval(self, bits: &[bool]) -> bool {
        bits[self.var()] != self.is_negated()
    }
}

impl TryFrom<i32> for Literal {
    type Error = CnfError;
    fn try_from(value: i32) -> Result<Self, Self::Error> {
        Literal::new(value)
    }
}

impl From<Literal> for i32 {
    fn from(l: Literal) -> i32 {
        l.0
    }
}

impl fmt::Debug for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.0)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A conjunction of nonempty clauses over `num_vars` variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfFormula {
    num_vars: usize,
    clauses: Vec<Vec<Literal>>,
}

impl CnfFormula {
    /// Validates every invariant: nonempty clauses, no repeated literal
    /// within a clause, all literals in `1..=num_vars`.
    pub fn new(num_vars: usize, clauses: Vec<Vec<Literal>>) -> Result<Self, CnfError> {
        if num_vars == 0 {
            return Err(CnfError::NoVariables);
        }
        for (ci, clause) in clauses.iter().enumerate() {
            if clause.is_empty() {
                return Err(CnfError::EmptyClause { clause: ci });
            }
            for (li, lit) in clause.iter().enumerate() {
                if lit.var() >= num_vars {
                    return Err(CnfError::LiteralOutOfRange {
                        literal: lit.value(),
                        num_vars,
                    });
                }
                if clause[..li].contains(lit) {
                    return Err(CnfError::DuplicateLiteral {
                        clause: ci,
                        literal: lit.value(),
                    });
                }
            }
        }
        Ok(CnfFormula { num_vars, clauses })
    }

    /// Builds a formula from raw signed integers.
    pub fn from_ints(num_vars: usize, clauses: &[&[i32]]) -> Result<Self, CnfError> {
        let clauses = clauses
            .iter()
            .map(|c| c.iter().map(|&v| Literal::new(v)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        CnfFormula::new(num_vars, clauses)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn clauses(&self) -> &[Vec<Literal>] {
        &self.clauses
    }

    pub fn clause(&self, index: usize) -> Result<&[Literal], CnfError> {
        self.clauses.get(index).map(Vec::as_slice).ok_or(CnfError::ClauseIndex {
            index,
            num_clauses: self.clauses.len(),
        })
    }

    pub fn num_literals(&self) -> usize {
        self.clauses.iter().map(Vec::len).sum()
    }

    /// Node count in the factor graph (variables plus clauses).
    pub fn node_count(&self) -> usize {
        self.num_vars + self.clauses.len()
    }

    pub fn clause_satisfied(clause: &[Literal], bits: &[bool]) -> bool {
        clause.iter().any(|l| l.eval(bits))
    }

    pub fn is_satisfied_by(&self, bits: &[bool]) -> bool {
        self.clauses.iter().all(|c| Self::clause_satisfied(c, bits))
    }

    /// Same formula with clause-internal literal order normalized.
    pub fn normalized(&self) -> CnfFormula {
        let clauses = self
            .clauses
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.sort();
                c
            })
            .collect();
        CnfFormula {
            num_vars: self.num_vars,
            clauses,
        }
    }
}

/// A point of the relaxed Boolean cube `[0, 1]^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    values: Vec<f64>,
}

impl Assignment {
    pub fn new(values: Vec<f64>) -> Result<Self, CnfError> {
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(CnfError::ValueOutOfRange { index, value });
            }
        }
        Ok(Assignment { values })
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        Assignment {
            values: bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Nearest of {0, 1}; exactly 0.5 goes to 1.
    pub fn discretize(&self) -> Vec<bool> {
        self.values.iter().map(|&v| round_bit(v)).collect()
    }
}

#[inline]
pub fn round_bit(value: f64) -> bool {
    value >= 0.5
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClauseCheck {
    pub clauses: Vec<bool>,
    pub satisfied: bool,
}

/// Evaluates the discretized assignment clause by clause.
pub fn check_assignment(formula: &CnfFormula, assignment: &Assignment) -> Result<ClauseCheck, CnfError> {
    if assignment.len() != formula.num_vars() {
        return Err(CnfError::LengthMismatch {
            expected: formula.num_vars(),
            got: assignment.len(),
        });
    }
    let bits = assignment.discretize();
    let clauses: Vec<bool> = formula.clauses().iter().map(|c| CnfFormula::clause_satisfied(c, &bits)).collect();
    let satisfied = clauses.iter().all(|&b| b);
    Ok(ClauseCheck { clauses, satisfied })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_invalid_formulas() {
        assert_eq!(CnfFormula::from_ints(1, &[&[2]]), Err(CnfError::LiteralOutOfRange { literal: 2, num_vars: 1 }));
        assert_eq!(CnfFormula::from_ints(1, &[&[]]), Err(CnfError::EmptyClause { clause: 0 }));
        assert_eq!(CnfFormula::from_ints(2, &[&[1, 1]]), Err(CnfError::DuplicateLiteral { clause: 0, literal: 1 }));
        assert_eq!(Literal::new(0), Err(CnfError::ZeroLiteral));
        // tautologies are representable
        assert!(CnfFormula::from_ints(1, &[&[1, -1]]).is_ok());
    }

    #[test]
    fn check_assignment_examples() {
        let f = CnfFormula::from_ints(2, &[&[1, -2]]).unwrap();
        let r = check_assignment(&f, &Assignment::new(vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(r.clauses, vec![true]);
        assert!(r.satisfied);

        let unsat = CnfFormula::from_ints(1, &[&[1], &[-1]]).unwrap();
        for x in [0.0, 0.3, 0.5, 1.0] {
            let r = check_assignment(&unsat, &Assignment::new(vec![x]).unwrap()).unwrap();
            assert!(!r.satisfied);
        }

        let f = CnfFormula::from_ints(2, &[&[1, 2]]).unwrap();
        let r = check_assignment(&f, &Assignment::new(vec![0.4, 0.6]).unwrap()).unwrap();
        assert!(r.satisfied);
    }

    #[test]
    fn rounding_tie_goes_to_one() {
        let a = Assignment::new(vec![0.5, 0.4999, 0.0, 1.0]).unwrap();
        assert_eq!(a.discretize(), vec![true, false, false, true]);
    }

    #[test]
    fn check_assignment_errors() {
        let f = CnfFormula::from_ints(2, &[&[1, -2]]).unwrap();
        let err = check_assignment(&f, &Assignment::new(vec![1.0]).unwrap()).unwrap_err();
        assert_eq!(err, CnfError::LengthMismatch { expected: 2, got: 1 });
        assert!(Assignment::new(vec![1.5]).is_err());
    }

    #[test]
    fn literal_accessors() {
        let l = Literal::new(-3).unwrap();
        assert_eq!(l.var(), 2);
        assert!(l.is_negated());
        assert_eq!(l.negate().value(), 3);
        assert_eq!(Literal::from_var(2, true), l);
    }
}
