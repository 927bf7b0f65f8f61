//! Exact clause identification from rational query losses, and the binary
//! exactness check of the clause loss.
//!
//! Variable `i` is queried at `x_i = H / b_i` where `(a_i, b_i)` is a prime
//! pair with `b_i - a_i = H`. The falsity product of a clause is then
//! `Π a_i · H^(#negated) / Π b_i`, an irreducible fraction whose denominator
//! names the clause's variables and whose numerator names its positive
//! literals.

use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::cnf::{Assignment, CnfFormula, Literal};
use crate::loss;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimePair {
    pub a: u64,
    pub b: u64,
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// The first `n` prime pairs with gap `h` and `a > h`, chosen greedily in
/// increasing order; a candidate whose `a` equals an already chosen `b` (or
/// whose `b` equals an already chosen `a`) is skipped.
pub fn gen_prime_pairs(n: usize, h: u64) -> Vec<PrimePair> {
    assert!(h >= 2 && h.is_multiple_of(2), "the gap must be a positive even number");
    let mut pairs: Vec<PrimePair> = Vec::with_capacity(n);
    let mut a = h + 1;
    while pairs.len() < n {
        if is_prime(a) && is_prime(a + h) {
            let b = a + h;
            if pairs.iter().all(|p| p.b != a && p.a != b) {
                pairs.push(PrimePair { a, b });
            }
        }
        a += 1;
    }
    pairs
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationalQuery {
    pub h: u64,
    pub pairs: Vec<PrimePair>,
    pub x: Vec<BigRational>,
}

impl RationalQuery {
    pub fn num_vars(&self) -> usize {
        self.pairs.len()
    }

    /// The query rounded to 64-bit reals.
    pub fn to_f64(&self) -> Vec<f64> {
        self.x.iter().map(|r| r.to_f64().expect("query entries are finite")).collect()
    }
}

pub fn build_identifying_query(n: usize, h: u64) -> RationalQuery {
    let pairs = gen_prime_pairs(n, h);
    let x = pairs.iter().map(|p| BigRational::new(BigInt::from(h), BigInt::from(p.b))).collect();
    RationalQuery { h, pairs, x }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationalClauseLoss {
    pub clause: usize,
    pub value: BigRational,
}

impl RationalClauseLoss {
    /// `1 - V_c`, the clause's falsity product.
    pub fn falsity(&self) -> BigRational {
        BigRational::one() - &self.value
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TheoremError {
    #[error("clause {clause} mentions variable {var} but the query covers only {num_vars} variables")]
    VariableOutOfRange { clause: usize, var: usize, num_vars: usize },
    #[error("clause {clause}: loss value is not strictly between 0 and 1")]
    OutOfUnitInterval { clause: usize },
    #[error("clause {clause}: denominator has a prime factor outside the query's prime set")]
    ForeignDenominatorFactor { clause: usize },
    #[error("clause {clause}: denominator contains b_{var} more than once")]
    RepeatedDenominatorFactor { clause: usize, var: usize },
    #[error("clause {clause}: numerator contains a_{var} but variable {var} is not in the clause")]
    NumeratorForAbsentVariable { clause: usize, var: usize },
    #[error("clause {clause}: numerator residual is not H^{negatives}")]
    BadResidual { clause: usize, negatives: usize },
}

/// `V_c` at the query point in exact arithmetic.
pub fn rational_clause_loss(formula: &CnfFormula, query: &RationalQuery, c: usize) -> Result<RationalClauseLoss, TheoremError> {
    let clause = formula.clauses().get(c).expect("clause index in range");
    let mut falsity = BigRational::one();
    for lit in clause {
        let x = query.x.get(lit.var()).ok_or(TheoremError::VariableOutOfRange {
            clause: c,
            var: lit.var() + 1,
            num_vars: query.num_vars(),
        })?;
        falsity *= if lit.is_negated() { x.clone() } else { BigRational::one() - x };
    }
    Ok(RationalClauseLoss {
        clause: c,
        value: BigRational::one() - falsity,
    })
}

pub fn rational_clause_losses(formula: &CnfFormula, query: &RationalQuery) -> Result<Vec<RationalClauseLoss>, TheoremError> {
    (0..formula.num_clauses()).map(|c| rational_clause_loss(formula, query, c)).collect()
}

/// Recovers a clause from its exact loss. Literals come back in variable order.
pub fn decode_clause(loss: &RationalClauseLoss, query: &RationalQuery) -> Result<Vec<Literal>, TheoremError> {
    let c = loss.clause;
    let f = loss.falsity();
    if f <= BigRational::zero() || f >= BigRational::one() {
        return Err(TheoremError::OutOfUnitInterval { clause: c });
    }
    let mut num = f.numer().clone();
    let mut den = f.denom().clone();
    let mut in_clause = vec![false; query.num_vars()];
    for (i, p) in query.pairs.iter().enumerate() {
        let b = BigInt::from(p.b);
        let (q, r) = den.div_rem(&b);
        if r.is_zero() {
            den = q;
            in_clause[i] = true;
            if (&den % &b).is_zero() {
                return Err(TheoremError::RepeatedDenominatorFactor { clause: c, var: i + 1 });
            }
        }
    }
    if !den.is_one() {
        return Err(TheoremError::ForeignDenominatorFactor { clause: c });
    }
    let mut positive = vec![false; query.num_vars()];
    for (i, p) in query.pairs.iter().enumerate() {
        let a = BigInt::from(p.a);
        let (q, r) = num.div_rem(&a);
        if r.is_zero() {
            if !in_clause[i] {
                return Err(TheoremError::NumeratorForAbsentVariable { clause: c, var: i + 1 });
            }
            num = q;
            positive[i] = true;
        }
    }
    let width = in_clause.iter().filter(|&&v| v).count();
    let negatives = width - positive.iter().filter(|&&v| v).count();
    if num != num_traits::pow(BigInt::from(query.h), negatives) {
        return Err(TheoremError::BadResidual { clause: c, negatives });
    }
    Ok((0..query.num_vars())
        .filter(|&i| in_clause[i])
        .map(|i| Literal::from_var(i, !positive[i]))
        .collect())
}

/// Decodes one clause per loss, preserving order.
pub fn decode_formula(losses: &[RationalClauseLoss], query: &RationalQuery) -> Result<CnfFormula, TheoremError> {
    let clauses = losses.iter().map(|l| decode_clause(l, query)).collect::<Result<Vec<_>, _>>()?;
    Ok(CnfFormula::new(query.num_vars().max(1), clauses).expect("decoded clauses are well formed"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Violation {
    /// `None` for the formula-level value.
    pub clause: Option<usize>,
    pub value: f64,
    pub expected: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Theorem1Report {
    pub clauses_checked: usize,
    pub violations: Vec<Theorem1Violation>,
}

impl Theorem1Report {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// At a binary point every clause value and the formula value must be
/// exactly 0 or 1 and agree with Boolean evaluation.
pub fn verify_theorem1(formula: &CnfFormula, bits: &[bool]) -> Theorem1Report {
    let x = Assignment::from_bits(bits);
    let mut report = Theorem1Report::default();
    for (c, clause) in formula.clauses().iter().enumerate() {
        let value = loss::clause_value(formula, &x, c).expect("assignment length matches");
        let expected = CnfFormula::clause_satisfied(clause, bits);
        report.clauses_checked += 1;
        if value != if expected { 1.0 } else { 0.0 } {
            report.violations.push(Theorem1Violation {
                clause: Some(c),
                value,
                expected,
            });
        }
    }
    let value = loss::formula_value(formula, &x).expect("assignment length matches");
    let expected = formula.is_satisfied_by(bits);
    if value != if expected { 1.0 } else { 0.0 } {
        report.violations.push(Theorem1Violation { clause: None, value, expected });
    }
    report
}

/// Runs [`verify_theorem1`] over every assignment of a formula with at most
/// 24 variables and merges the reports.
pub fn verify_theorem1_exhaustive(formula: &CnfFormula) -> Theorem1Report {
    let n = formula.num_vars();
    assert!(n <= 24, "exhaustive check limited to 24 variables");
    let mut total = Theorem1Report::default();
    let mut bits = vec![false; n];
    for mask in 0u32..(1u32 << n) {
        for (i, b) in bits.iter_mut().enumerate() {
            *b = mask >> i & 1 == 1;
        }
        let r = verify_theorem1(formula, &bits);
        total.clauses_checked += r.clauses_checked;
        total.violations.extend(r.violations);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn pair_selection() {
        let pairs: Vec<(u64, u64)> = gen_prime_pairs(4, 2).iter().map(|p| (p.a, p.b)).collect();
        assert_eq!(pairs, vec![(3, 5), (11, 13), (17, 19), (29, 31)]);
    }

    #[test]
    fn query_values() {
        let q = build_identifying_query(2, 2);
        assert_eq!(q.x, vec![r(2, 5), r(2, 13)]);
    }

    #[test]
    fn worked_losses() {
        let q = build_identifying_query(2, 2);
        let f = CnfFormula::from_ints(2, &[&[1, -2], &[-1]]).unwrap();
        assert_eq!(rational_clause_loss(&f, &q, 0).unwrap().value, r(59, 65));
        assert_eq!(rational_clause_loss(&f, &q, 1).unwrap().value, r(3, 5));
    }

    #[test]
    fn decode_worked_examples() {
        let q = build_identifying_query(2, 2);
        let loss = |f: BigRational| RationalClauseLoss {
            clause: 0,
            value: BigRational::one() - f,
        };
        let ints = |c: Vec<Literal>| c.iter().map(|l| l.value()).collect::<Vec<_>>();
        assert_eq!(ints(decode_clause(&loss(r(6, 65)), &q).unwrap()), vec![1, -2]);
        assert_eq!(ints(decode_clause(&loss(r(2, 5)), &q).unwrap()), vec![-1]);
        assert!(decode_clause(&loss(r(7, 65)), &q).is_err());
        assert_eq!(decode_clause(&loss(r(3, 35)), &q), Err(TheoremError::ForeignDenominatorFactor { clause: 0 }));
        assert_eq!(decode_clause(&loss(r(11, 65)), &q), Err(TheoremError::BadResidual { clause: 0, negatives: 1 }));
        let q3 = build_identifying_query(3, 2);
        assert_eq!(
            decode_clause(&loss(r(17, 65)), &q3),
            Err(TheoremError::NumeratorForAbsentVariable { clause: 0, var: 3 })
        );
    }

    #[test]
    fn tautology_is_not_identifiable() {
        let q = build_identifying_query(1, 2);
        let f = CnfFormula::from_ints(1, &[&[1, -1]]).unwrap();
        let l = rational_clause_loss(&f, &q, 0).unwrap();
        assert!(decode_clause(&l, &q).is_err());
    }

    #[test]
    fn theorem1_on_small_formula() {
        let f = CnfFormula::from_ints(3, &[&[1, -2], &[2, 3], &[-1, -3]]).unwrap();
        let r = verify_theorem1_exhaustive(&f);
        assert!(r.holds());
        assert_eq!(r.clauses_checked, 24);
    }
}
