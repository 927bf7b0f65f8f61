//! Reverse-mode differentiation over 2-D `f32` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. [`Tape::backward`]
//! walks the record in reverse and returns the gradient of a scalar with
//! respect to every node that needs one. A tape is built for one pass and
//! thrown away afterwards.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::graph::{FactorGraph, SparseBinary};
use crate::loss;
use crate::tensor::{self, Matrix};

/// Additive floor inside the PairNorm square root.
pub const PAIRNORM_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TapeError {
    #[error("loss must be a 1x1 tensor, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
}

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    LeakyRelu(Var, f32),
    Log(Var),
    Sum(Var),
    Mean(Var),
    Scale(Var, f32),
    MulConst(Var, Matrix),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SparseMatMul {
        a: &'a SparseBinary,
        transpose: bool,
        x: Var,
    },
    PairNorm {
        x: Var,
        segments: &'a [u32],
        centered: Matrix,
        inv_norm: Vec<f64>,
    },
    GradScale(Var, f32),
    StopGradient,
    ClauseValues {
        q: Var,
        graph: &'a FactorGraph,
    },
    InstanceLogLoss {
        x: Var,
        graph: &'a FactorGraph,
        clause_offsets: &'a [usize],
    },
}

struct Node<'a> {
    value: Matrix,
    op: Op<'a>,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Leaf gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.index()].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads[v.index()].take()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op<'a>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() as u32 - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.index()].needs_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.index()].value
    }

    pub fn scalar(&self, v: Var) -> f32 {
        self.value(v).data()[0]
    }

    /// A constant; no gradient flows into it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by `backward`.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = tensor::matmul(self.value(a), self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    /// Adds a 1×c row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "bias must be a single row");
        assert_eq!(b.cols(), self.value(a).cols(), "bias width mismatch");
        let mut v = self.value(a).clone();
        let c = v.cols();
        for r in 0..v.rows() {
            for (o, &bv) in v.row_mut(r).iter_mut().zip(&b.data()[..c]) {
                *o += bv;
            }
        }
        let ng = self.ng(a) || self.ng(bias);
        self.push(v, Op::AddBias(a, bias), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shape mismatch");
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul shape mismatch");
        let mut v = self.value(a).clone();
        for (o, &x) in v.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= x;
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(tensor::sigmoid);
        let ng = self.ng(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f32) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { x * slope });
        let ng = self.ng(a);
        self.push(v, Op::LeakyRelu(a, slope), ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(libm::logf);
        let ng = self.ng(a);
        self.push(v, Op::Log(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum() as f32;
        let ng = self.ng(a);
        self.push(Matrix::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let s = (m.sum() / (m.rows() * m.cols()) as f64) as f32;
        let ng = self.ng(a);
        self.push(Matrix::scalar(s), Op::Mean(a), ng)
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Var {
        let v = self.value(a).map(|x| x * s);
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, s), ng)
    }

    /// Element-wise product with a constant matrix.
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Var {
        assert_eq!(self.value(a).shape(), c.shape(), "mul_const shape mismatch");
        let mut v = self.value(a).clone();
        for (o, &x) in v.data_mut().iter_mut().zip(c.data()) {
            *o *= x;
        }
        let ng = self.ng(a);
        self.push(v, Op::MulConst(a, c), ng)
    }

    /// Feature-wise concatenation.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::concat_cols(&mats);
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(v, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice_cols(start, end);
        let ng = self.ng(a);
        self.push(v, Op::SliceCols(a, start), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::concat_rows(&mats);
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(v, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice_rows(start, end);
        let ng = self.ng(a);
        self.push(v, Op::SliceRows(a, start), ng)
    }

    /// `A·x`, or `Aᵀ·x` when `transpose` is set.
    pub fn sparse_matmul(&mut self, a: &'a SparseBinary, x: Var, transpose: bool) -> Var {
        let v = if transpose {
            a.matmul_transposed(self.value(x))
        } else {
            a.matmul(self.value(x))
        };
        let ng = self.ng(x);
        self.push(v, Op::SparseMatMul { a, transpose, x }, ng)
    }

    /// PairNorm (centering then scaling to unit mean squared entry) applied
    /// independently to each group of rows sharing a segment id.
    pub fn pairnorm(&mut self, x: Var, segments: &'a [u32]) -> Var {
        let input = self.value(x);
        assert_eq!(segments.len(), input.rows(), "one segment id per row");
        let (out, centered, inv_norm) = pairnorm_forward(input, segments);
        let ng = self.ng(x);
        self.push(
            out,
            Op::PairNorm {
                x,
                segments,
                centered,
                inv_norm,
            },
            ng,
        )
    }

    /// Identity forward; backward multiplies the gradient by `1 - alpha`.
    pub fn grad_scale(&mut self, x: Var, alpha: f32) -> Var {
        let v = self.value(x).clone();
        let ng = self.ng(x);
        self.push(v, Op::GradScale(x, alpha), ng)
    }

    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let v = self.value(x).clone();
        self.push(v, Op::StopGradient, false)
    }

    /// Per-clause values of every query column (m×d).
    pub fn clause_values(&mut self, q: Var, graph: &'a FactorGraph) -> Var {
        let v = loss::per_clause_losses(graph, self.value(q)).expect("query rows match the factor graph");
        let ng = self.ng(q);
        self.push(v, Op::ClauseValues { q, graph }, ng)
    }

    /// Per-instance, per-column log-losses (B×u).
    pub fn instance_log_losses(&mut self, x: Var, graph: &'a FactorGraph, clause_offsets: &'a [usize]) -> Var {
        let v = loss::instance_log_losses(graph, clause_offsets, self.value(x)).expect("assignment rows match the factor graph");
        let ng = self.ng(x);
        self.push(v, Op::InstanceLogLoss { x, graph, clause_offsets }, ng)
    }

    /// Gradients of the scalar `loss` with respect to every leaf it reaches.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TapeError> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(TapeError::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.index()] = Some(Matrix::scalar(1.0));
        for idx in (0..=loss.index()).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node<'a>, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut acc = |v: Var, m: Matrix| {
            if !self.ng(v) {
                return;
            }
            match &mut grads[v.index()] {
                Some(existing) => existing.add_assign(&m),
                slot @ None => *slot = Some(m),
            }
        };
        match &node.op {
            Op::Leaf | Op::StopGradient => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    acc(*a, tensor::matmul_nt(g, self.value(*b)));
                }
                if self.ng(*b) {
                    let av = self.value(*a);
                    let mut gb = Matrix::zeros(av.cols(), g.cols());
                    tensor::matmul_tn_acc(av, g, &mut gb);
                    acc(*b, gb);
                }
            }
            Op::AddBias(a, b) => {
                if self.ng(*b) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(*b, gb);
                }
                acc(*a, g.clone());
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    acc(*a, hadamard(g, self.value(*b)));
                }
                if self.ng(*b) {
                    acc(*b, hadamard(g, self.value(*a)));
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let mut ga = g.clone();
                for (o, &s) in ga.data_mut().iter_mut().zip(y.data()) {
                    *o *= s * (1.0 - s);
                }
                acc(*a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                let mut ga = g.clone();
                for (o, &xv) in ga.data_mut().iter_mut().zip(x.data()) {
                    if xv <= 0.0 {
                        *o *= *slope;
                    }
                }
                acc(*a, ga);
            }
            Op::Log(a) => {
                let x = self.value(*a);
                let mut ga = g.clone();
                for (o, &xv) in ga.data_mut().iter_mut().zip(x.data()) {
                    *o /= xv;
                }
                acc(*a, ga);
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                acc(*a, Matrix::filled(r, c, g.data()[0]));
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                acc(*a, Matrix::filled(r, c, g.data()[0] / (r * c) as f32));
            }
            Op::Scale(a, s) => {
                let s = *s;
                acc(*a, g.map(|v| v * s));
            }
            Op::MulConst(a, c) => acc(*a, hadamard(g, c)),
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.ng(p) {
                        acc(p, g.slice_cols(off, off + w));
                    }
                    off += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.value(*a).shape();
                let mut ga = Matrix::zeros(r, c);
                let w = g.cols();
                for row in 0..r {
                    ga.row_mut(row)[*start..*start + w].copy_from_slice(g.row(row));
                }
                acc(*a, ga);
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let h = self.value(p).rows();
                    if self.ng(p) {
                        acc(p, g.slice_rows(off, off + h));
                    }
                    off += h;
                }
            }
            Op::SliceRows(a, start) => {
                let (r, c) = self.value(*a).shape();
                let mut ga = Matrix::zeros(r, c);
                ga.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                acc(*a, ga);
            }
            Op::SparseMatMul { a, transpose, x } => {
                let gx = if *transpose { a.matmul(g) } else { a.matmul_transposed(g) };
                acc(*x, gx);
            }
            Op::PairNorm {
                x,
                segments,
                centered,
                inv_norm,
            } => acc(*x, pairnorm_backward(g, centered, inv_norm, segments)),
            Op::GradScale(x, alpha) => {
                let keep = 1.0 - *alpha;
                acc(*x, g.map(|v| v * keep));
            }
            Op::ClauseValues { q, graph } => {
                acc(*q, loss::per_clause_losses_backward(graph, self.value(*q), g));
            }
            Op::InstanceLogLoss { x, graph, clause_offsets } => {
                acc(*x, loss::instance_log_losses_backward(graph, clause_offsets, self.value(*x), g));
            }
        }
    }
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        *o *= v;
    }
    out
}

fn segment_count(segments: &[u32]) -> usize {
    segments.iter().map(|&s| s as usize + 1).max().unwrap_or(0)
}

/// Returns (output, centered input, per-segment inverse norm).
pub fn pairnorm_forward(x: &Matrix, segments: &[u32]) -> (Matrix, Matrix, Vec<f64>) {
    let d = x.cols();
    let nseg = segment_count(segments);
    let mut counts = vec![0usize; nseg];
    let mut sums = vec![0.0f64; nseg * d];
    for (r, &s) in segments.iter().enumerate() {
        let s = s as usize;
        counts[s] += 1;
        for (acc, &v) in sums[s * d..(s + 1) * d].iter_mut().zip(x.row(r)) {
            *acc += v as f64;
        }
    }
    let means: Vec<f32> = sums
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let n = counts[i / d.max(1)];
            if n == 0 {
                0.0
            } else {
                (s / n as f64) as f32
            }
        })
        .collect();
    let mut centered = x.clone();
    let mut sq = vec![0.0f64; nseg];
    for (r, &s) in segments.iter().enumerate() {
        let s = s as usize;
        let mean = &means[s * d..(s + 1) * d];
        let row = centered.row_mut(r);
        let mut acc = 0.0f64;
        for (v, &m) in row.iter_mut().zip(mean) {
            *v -= m;
            acc += (*v as f64) * (*v as f64);
        }
        sq[s] += acc;
    }
    let inv_norm: Vec<f64> = (0..nseg)
        .map(|s| {
            let denom = (counts[s] * d).max(1) as f64;
            1.0 / libm::sqrt(sq[s] / denom + PAIRNORM_EPSILON)
        })
        .collect();
    let mut out = centered.clone();
    for (r, &s) in segments.iter().enumerate() {
        let k = inv_norm[s as usize] as f32;
        for v in out.row_mut(r) {
            *v *= k;
        }
    }
    (out, centered, inv_norm)
}

fn pairnorm_backward(g: &Matrix, centered: &Matrix, inv_norm: &[f64], segments: &[u32]) -> Matrix {
    let d = g.cols();
    let nseg = inv_norm.len();
    let mut counts = vec![0usize; nseg];
    let mut dots = vec![0.0f64; nseg];
    for (r, &s) in segments.iter().enumerate() {
        let s = s as usize;
        counts[s] += 1;
        dots[s] += g.row(r).iter().zip(centered.row(r)).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>();
    }
    // d(centered) = r·g − r³/(N·d) · <g, centered> · centered
    let mut dc = Matrix::zeros(g.rows(), d);
    let mut col_sums = vec![0.0f64; nseg * d];
    for (r, &s) in segments.iter().enumerate() {
        let s = s as usize;
        let rn = inv_norm[s];
        let coef = rn * rn * rn / (counts[s] * d) as f64 * dots[s];
        let out = dc.row_mut(r);
        for ((o, &gv), &cv) in out.iter_mut().zip(g.row(r)).zip(centered.row(r)) {
            *o = (rn * gv as f64 - coef * cv as f64) as f32;
        }
        for (acc, &v) in col_sums[s * d..(s + 1) * d].iter_mut().zip(out.iter()) {
            *acc += v as f64;
        }
    }
    for (r, &s) in segments.iter().enumerate() {
        let s = s as usize;
        let n = counts[s] as f64;
        for (o, &cs) in dc.row_mut(r).iter_mut().zip(&col_sums[s * d..(s + 1) * d]) {
            *o -= (cs / n) as f32;
        }
    }
    dc
}
