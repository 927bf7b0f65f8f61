//! Unsupervised differentiable CNF losses.
//!
//! For an assignment `x ∈ [0,1]^n` the value of clause `c` is
//! `V_c(x) = 1 - Π_{i∈c+}(1 - x_i) · Π_{i∈c-} x_i`, the formula value is the
//! product of clause values and the training objective is
//! `-Σ_c log max(V_c(x), ε)`.
//!
//! All products are accumulated in `f64`. Partial derivatives use the
//! clause's falsity product with one factor left out, formed from prefix and
//! suffix products (never by dividing out a factor that may be zero).

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{Assignment, CnfError, CnfFormula, Literal};
use crate::graph::FactorGraph;
use crate::tensor::Matrix;

/// Floor applied inside the logarithm and the reciprocal.
pub const LOG_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("query has {got} rows but the factor graph has {expected} variables")]
    ShapeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Cnf(#[from] CnfError),
}

/// Which scalar the query-feedback gradient differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// `∂(Σ_c V_c)/∂x`
    #[default]
    ClauseSum,
    /// `∂(-Σ_c log max(V_c, ε))/∂x`
    Log,
}

#[inline]
fn factor(lit: Literal, x: &[f64]) -> f64 {
    let v = x[lit.var()];
    if lit.is_negated() {
        v
    } else {
        1.0 - v
    }
}

fn falsity(clause: &[Literal], x: &[f64]) -> f64 {
    clause.iter().fold(1.0, |p, &l| p * factor(l, x))
}

/// `V_c(x)` for clause `c`.
pub fn clause_value(formula: &CnfFormula, x: &Assignment, c: usize) -> Result<f64, CnfError> {
    check_len(formula, x)?;
    let clause = formula.clause(c)?;
    Ok(1.0 - falsity(clause, x.values()))
}

fn check_len(formula: &CnfFormula, x: &Assignment) -> Result<(), CnfError> {
    if x.len() != formula.num_vars() {
        return Err(CnfError::LengthMismatch {
            expected: formula.num_vars(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Every clause value, in clause order.
pub fn clause_values(formula: &CnfFormula, x: &Assignment) -> Result<Vec<f64>, CnfError> {
    check_len(formula, x)?;
    Ok(formula.clauses().iter().map(|c| 1.0 - falsity(c, x.values())).collect())
}

/// `Π_c V_c(x)`.
pub fn formula_value(formula: &CnfFormula, x: &Assignment) -> Result<f64, CnfError> {
    Ok(clause_values(formula, x)?.iter().product())
}

/// `-Σ_c log max(V_c(x), ε)`.
pub fn log_loss(formula: &CnfFormula, x: &Assignment) -> Result<f64, CnfError> {
    Ok(clause_values(formula, x)?.iter().map(|&v| clamped_neg_log(v)).sum())
}

#[inline]
fn clamped_neg_log(v: f64) -> f64 {
    let l = -libm::log(v.max(LOG_EPSILON));
    // -log(1) is -0.0; report +0.
    if l == 0.0 {
        0.0
    } else {
        l
    }
}

/// Visits `(literal position, P_c^(-ℓ))` for every literal of a clause.
fn for_each_leave_one_out(factors: &[f64], mut f: impl FnMut(usize, f64)) {
    let k = factors.len();
    let mut prefix = vec![1.0f64; k + 1];
    for l in 0..k {
        prefix[l + 1] = prefix[l] * factors[l];
    }
    let mut suffix = 1.0f64;
    for l in (0..k).rev() {
        f(l, prefix[l] * suffix);
        suffix *= factors[l];
    }
}

/// Gradient of the chosen scalar with respect to `x`.
pub fn loss_gradient(formula: &CnfFormula, x: &Assignment, mode: GradientMode) -> Result<Vec<f64>, CnfError> {
    check_len(formula, x)?;
    let xs = x.values();
    let mut grad = vec![0.0f64; formula.num_vars()];
    let mut factors = Vec::new();
    for clause in formula.clauses() {
        factors.clear();
        factors.extend(clause.iter().map(|&l| factor(l, xs)));
        let scale = match mode {
            GradientMode::ClauseSum => 1.0,
            GradientMode::Log => {
                let v = 1.0 - factors.iter().product::<f64>();
                -1.0 / v.max(LOG_EPSILON)
            }
        };
        for_each_leave_one_out(&factors, |l, rest| {
            let lit = clause[l];
            let dv = if lit.is_negated() { -rest } else { rest };
            grad[lit.var()] += scale * dv;
        });
    }
    Ok(grad)
}

/// Everything the loss says about one assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub clause_losses: Vec<f64>,
    pub formula_value: f64,
    pub log_loss: f64,
    pub gradient: Option<Vec<f64>>,
}

pub fn loss_report(formula: &CnfFormula, x: &Assignment, with_gradient: bool) -> Result<LossReport, CnfError> {
    let clause_losses = clause_values(formula, x)?;
    let formula_value = clause_losses.iter().product();
    let log_loss = clause_losses.iter().map(|&v| clamped_neg_log(v)).sum();
    let gradient = if with_gradient {
        Some(loss_gradient(formula, x, GradientMode::Log)?)
    } else {
        None
    };
    Ok(LossReport {
        clause_losses,
        formula_value,
        log_loss,
        gradient,
    })
}

// ---------------------------------------------------------------------------
// Matrix forms over factor graphs: column j of the query is an independent
// assignment.

fn check_rows(graph: &FactorGraph, q: &Matrix) -> Result<(), LossError> {
    if q.rows() != graph.num_vars() {
        return Err(LossError::ShapeMismatch {
            expected: graph.num_vars(),
            got: q.rows(),
        });
    }
    Ok(())
}

fn clause_falsity_row(graph: &FactorGraph, q: &Matrix, c: usize, prod: &mut [f64]) {
    prod.fill(1.0);
    for occ in graph.clause(c) {
        let row = q.row(occ.var as usize);
        if occ.negated {
            for (p, &v) in prod.iter_mut().zip(row) {
                *p *= v as f64;
            }
        } else {
            for (p, &v) in prod.iter_mut().zip(row) {
                *p *= 1.0 - v as f64;
            }
        }
    }
}

/// m×d matrix of clause values, one column per query column.
pub fn per_clause_losses(graph: &FactorGraph, q: &Matrix) -> Result<Matrix, LossError> {
    check_rows(graph, q)?;
    let d = q.cols();
    let mut out = Matrix::zeros(graph.num_clauses(), d);
    let mut prod = vec![0.0f64; d];
    for c in 0..graph.num_clauses() {
        clause_falsity_row(graph, q, c, &mut prod);
        for (o, &p) in out.row_mut(c).iter_mut().zip(&prod) {
            *o = (1.0 - p) as f32;
        }
    }
    Ok(out)
}

/// Adds `Σ_j upstream[j] · ∂V_c/∂q[·, j]` for clause `c` into `grad`.
fn accumulate_clause_grad(graph: &FactorGraph, q: &Matrix, c: usize, upstream: &[f64], grad: &mut Matrix, scratch: &mut ClauseScratch) {
    let occs = graph.clause(c);
    let k = occs.len();
    let d = q.cols();
    scratch.resize(k, d);
    // factors[l][j] and prefix[l][j] = Π_{l'<l} factors[l'][j]
    for (l, occ) in occs.iter().enumerate() {
        let row = q.row(occ.var as usize);
        let f = &mut scratch.factors[l * d..(l + 1) * d];
        for (fv, &v) in f.iter_mut().zip(row) {
            *fv = if occ.negated { v as f64 } else { 1.0 - v as f64 };
        }
    }
    scratch.prefix[..d].fill(1.0);
    for l in 0..k {
        let (done, rest) = scratch.prefix.split_at_mut((l + 1) * d);
        let prev = &done[l * d..];
        let f = &scratch.factors[l * d..(l + 1) * d];
        for ((p, &a), &b) in rest[..d].iter_mut().zip(prev).zip(f) {
            *p = a * b;
        }
    }
    scratch.suffix.fill(1.0);
    for l in (0..k).rev() {
        let occ = occs[l];
        let pre = &scratch.prefix[l * d..(l + 1) * d];
        let f = &scratch.factors[l * d..(l + 1) * d];
        let g = grad.row_mut(occ.var as usize);
        for j in 0..d {
            let rest = pre[j] * scratch.suffix[j];
            let dv = if occ.negated { -rest } else { rest };
            g[j] += (upstream[j] * dv) as f32;
            scratch.suffix[j] *= f[j];
        }
    }
}

#[derive(Default)]
struct ClauseScratch {
    factors: Vec<f64>,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
}

impl ClauseScratch {
    fn resize(&mut self, k: usize, d: usize) {
        self.factors.resize(k * d, 0.0);
        self.prefix.resize((k + 1) * d, 0.0);
        self.suffix.resize(d, 0.0);
    }
}

/// Vector-Jacobian product of [`per_clause_losses`]: `upstream` is m×d.
pub fn per_clause_losses_backward(graph: &FactorGraph, q: &Matrix, upstream: &Matrix) -> Matrix {
    let d = q.cols();
    let mut grad = Matrix::zeros(q.rows(), d);
    let mut scratch = ClauseScratch::default();
    let mut up = vec![0.0f64; d];
    for c in 0..graph.num_clauses() {
        for (u, &v) in up.iter_mut().zip(upstream.row(c)) {
            *u = v as f64;
        }
        accumulate_clause_grad(graph, q, c, &up, &mut grad, &mut scratch);
    }
    grad
}

/// The query-feedback feature `∇_q e`: n×d, one gradient per query column.
pub fn query_gradient(graph: &FactorGraph, q: &Matrix, mode: GradientMode) -> Result<Matrix, LossError> {
    check_rows(graph, q)?;
    let d = q.cols();
    let mut grad = Matrix::zeros(q.rows(), d);
    let mut scratch = ClauseScratch::default();
    let mut up = vec![1.0f64; d];
    let mut prod = vec![0.0f64; d];
    for c in 0..graph.num_clauses() {
        if mode == GradientMode::Log {
            clause_falsity_row(graph, q, c, &mut prod);
            for (u, &p) in up.iter_mut().zip(&prod) {
                *u = -1.0 / (1.0 - p).max(LOG_EPSILON);
            }
        }
        accumulate_clause_grad(graph, q, c, &up, &mut grad, &mut scratch);
    }
    Ok(grad)
}

/// Per-instance, per-column log-losses: row k of the result holds
/// `-Σ_{c∈instance k} log max(V_c(x[·, j]), ε)` for every column j.
/// `clause_offsets` has one more entry than there are instances.
pub fn instance_log_losses(graph: &FactorGraph, clause_offsets: &[usize], x: &Matrix) -> Result<Matrix, LossError> {
    check_rows(graph, x)?;
    let u = x.cols();
    let instances = clause_offsets.len() - 1;
    let mut out = Matrix::zeros(instances, u);
    let mut prod = vec![0.0f64; u];
    let mut acc = vec![0.0f64; u];
    for k in 0..instances {
        acc.fill(0.0);
        for c in clause_offsets[k]..clause_offsets[k + 1] {
            clause_falsity_row(graph, x, c, &mut prod);
            for (a, &p) in acc.iter_mut().zip(&prod) {
                *a += clamped_neg_log(1.0 - p);
            }
        }
        for (o, &a) in out.row_mut(k).iter_mut().zip(&acc) {
            *o = a as f32;
        }
    }
    Ok(out)
}

/// Vector-Jacobian product of [`instance_log_losses`]; `upstream` is B×u.
pub fn instance_log_losses_backward(graph: &FactorGraph, clause_offsets: &[usize], x: &Matrix, upstream: &Matrix) -> Matrix {
    let u = x.cols();
    let mut grad = Matrix::zeros(x.rows(), u);
    let mut scratch = ClauseScratch::default();
    let mut prod = vec![0.0f64; u];
    let mut up = vec![0.0f64; u];
    for k in 0..clause_offsets.len() - 1 {
        let g = upstream.row(k);
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        for c in clause_offsets[k]..clause_offsets[k + 1] {
            clause_falsity_row(graph, x, c, &mut prod);
            for j in 0..u {
                up[j] = g[j] as f64 * (-1.0 / (1.0 - prod[j]).max(LOG_EPSILON));
            }
            accumulate_clause_grad(graph, x, c, &up, &mut grad, &mut scratch);
        }
    }
    grad
}

// ---------------------------------------------------------------------------
// Multi-assignment loss.

/// Rank weights for per-column losses: losses sorted in descending order get
/// indices 1..=u and weight `j² / Σ j²`. Returns the weight of every column
/// (in column order) and the column with the smallest loss (ties to the
/// lowest index).
pub fn rank_weights(losses: &[f64]) -> (Vec<f64>, usize) {
    let u = losses.len();
    assert!(u >= 1, "need at least one assignment");
    let mut order: Vec<usize> = (0..u).collect();
    // descending by loss; equal losses keep column order
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
    let denom: f64 = (1..=u).map(|j| (j * j) as f64).sum();
    let mut weights = vec![0.0; u];
    for (rank, &col) in order.iter().enumerate() {
        let j = (rank + 1) as f64;
        weights[col] = j * j / denom;
    }
    (weights, best_column(losses))
}

/// Index of the smallest loss, ties to the lowest index.
pub fn best_column(losses: &[f64]) -> usize {
    let mut best = 0;
    for (j, &l) in losses.iter().enumerate().skip(1) {
        if l < losses[best] {
            best = j;
        }
    }
    best
}

/// `Σ_j j² · l_(j) / Σ_j j²` with `l_(1)` the largest loss, plus the best column.
pub fn rank_weighted_loss(losses: &[f64]) -> (f64, usize) {
    let u = losses.len();
    assert!(u >= 1, "need at least one assignment");
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let num: f64 = sorted.iter().enumerate().map(|(r, &l)| ((r + 1) * (r + 1)) as f64 * l).sum();
    let denom: f64 = (1..=u).map(|j| (j * j) as f64).sum();
    (num / denom, best_column(losses))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiAssignmentLoss {
    pub loss: f64,
    pub best: usize,
    pub column_losses: Vec<f64>,
}

/// Weighted loss of `u` candidate assignments held as the columns of an n×u matrix.
pub fn multi_assignment_loss(outputs: &Matrix, formula: &CnfFormula) -> Result<MultiAssignmentLoss, LossError> {
    if outputs.rows() != formula.num_vars() {
        return Err(LossError::ShapeMismatch {
            expected: formula.num_vars(),
            got: outputs.rows(),
        });
    }
    let column_losses = (0..outputs.cols())
        .map(|j| {
            let col: Vec<f64> = outputs.column(j).iter().map(|&v| v as f64).collect();
            log_loss(formula, &Assignment::new(col)?)
        })
        .collect::<Result<Vec<_>, CnfError>>()?;
    let (loss, best) = rank_weighted_loss(&column_losses);
    Ok(MultiAssignmentLoss { loss, best, column_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn f(n: usize, clauses: &[&[i32]]) -> CnfFormula {
        CnfFormula::from_ints(n, clauses).unwrap()
    }

    fn a(v: &[f64]) -> Assignment {
        Assignment::new(v.to_vec()).unwrap()
    }

    #[test]
    fn clause_value_examples() {
        let phi = f(2, &[&[1, -2]]);
        assert_eq!(clause_value(&phi, &a(&[1.0, 1.0]), 0).unwrap(), 1.0);
        assert_eq!(clause_value(&phi, &a(&[0.0, 1.0]), 0).unwrap(), 0.0);
        assert_eq!(clause_value(&phi, &a(&[0.5, 0.5]), 0).unwrap(), 0.75);
        assert!(matches!(clause_value(&phi, &a(&[0.5, 0.5]), 3), Err(CnfError::ClauseIndex { index: 3, .. })));
    }

    #[test]
    fn log_loss_examples() {
        assert_eq!(log_loss(&f(2, &[&[1], &[-1, 2]]), &a(&[1.0, 1.0])).unwrap(), 0.0);
        let half = log_loss(&f(1, &[&[1]]), &a(&[0.5])).unwrap();
        assert!((half - core::f64::consts::LN_2).abs() < 1e-12);
        let clamped = log_loss(&f(1, &[&[1]]), &a(&[0.0])).unwrap();
        assert!((clamped - 13.815510557964274).abs() < 1e-9);
    }

    #[test]
    fn gradient_examples() {
        let g = loss_gradient(&f(1, &[&[1]]), &a(&[0.5]), GradientMode::ClauseSum).unwrap();
        assert_eq!(g, vec![1.0]);
        let g = loss_gradient(&f(1, &[&[-1]]), &a(&[0.5]), GradientMode::ClauseSum).unwrap();
        assert_eq!(g, vec![-1.0]);
    }

    #[test]
    fn gradient_at_binary_points_is_finite() {
        // factor x_i = 0 must not be divided out
        let phi = f(3, &[&[-1, -2, 3], &[1, 2]]);
        let g = loss_gradient(&phi, &a(&[0.0, 1.0, 0.0]), GradientMode::Log).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
        // clause 0 has falsity factors (0, 1, 1): only variable 1 sees a nonzero rest-product
        let g = loss_gradient(&f(3, &[&[-1, -2, 3]]), &a(&[0.0, 1.0, 0.0]), GradientMode::ClauseSum).unwrap();
        assert_eq!(g, vec![-1.0, 0.0, 0.0]);
    }

    #[test]
    fn multi_assignment_examples() {
        let (l, best) = rank_weighted_loss(&[5.0, 2.0, 1.0]);
        assert_eq!(l, 22.0 / 14.0);
        assert_eq!(best, 2);
        let (l, _) = rank_weighted_loss(&[3.25]);
        assert_eq!(l, 3.25);
        let (l, _) = rank_weighted_loss(&[0.7, 0.7, 0.7, 0.7]);
        assert!((l - 0.7).abs() < 1e-15);
        let (w, best) = rank_weights(&[5.0, 2.0, 1.0]);
        assert_eq!(w, vec![1.0 / 14.0, 4.0 / 14.0, 9.0 / 14.0]);
        assert_eq!(best, 2);
        assert_eq!(best_column(&[1.0, 0.5, 0.5]), 1);
    }

    #[test]
    fn multi_assignment_single_column_is_log_loss() {
        let phi = f(2, &[&[1, 2], &[-1]]);
        let out = Matrix::from_vec(2, 1, vec![0.25, 0.75]);
        let r = multi_assignment_loss(&out, &phi).unwrap();
        let direct = log_loss(&phi, &a(&[0.25, 0.75])).unwrap();
        assert!((r.loss - direct).abs() < 1e-12);
        assert_eq!(r.best, 0);
    }

    #[test]
    fn matrix_forms_agree_with_scalar_forms() {
        let phi = f(3, &[&[1, -2], &[2, 3, -1], &[-3]]);
        let g = FactorGraph::new(&phi);
        let q = Matrix::from_vec(3, 2, vec![0.2, 0.9, 0.6, 0.1, 0.35, 0.5]);
        let e = per_clause_losses(&g, &q).unwrap();
        for j in 0..2 {
            let x = a(&q.column(j).iter().map(|&v| v as f64).collect::<Vec<_>>());
            let cv = clause_values(&phi, &x).unwrap();
            for c in 0..3 {
                assert_eq!(e.get(c, j), cv[c] as f32);
            }
            let grad = loss_gradient(&phi, &x, GradientMode::ClauseSum).unwrap();
            let gm = query_gradient(&g, &q, GradientMode::ClauseSum).unwrap();
            let glog = loss_gradient(&phi, &x, GradientMode::Log).unwrap();
            let gmlog = query_gradient(&g, &q, GradientMode::Log).unwrap();
            for i in 0..3 {
                assert!((gm.get(i, j) as f64 - grad[i]).abs() < 1e-6);
                assert!((gmlog.get(i, j) as f64 - glog[i]).abs() < 1e-5);
            }
        }
        let ll = instance_log_losses(&g, &[0, 3], &q).unwrap();
        for j in 0..2 {
            let x = a(&q.column(j).iter().map(|&v| v as f64).collect::<Vec<_>>());
            assert!((ll.get(0, j) as f64 - log_loss(&phi, &x).unwrap()).abs() < 1e-5);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = FactorGraph::new(&f(3, &[&[1]]));
        let q = Matrix::zeros(2, 4);
        assert_eq!(per_clause_losses(&g, &q).unwrap_err(), LossError::ShapeMismatch { expected: 3, got: 2 });
    }
}
