//! One recurrent step of each architecture, recorded on a tape.

use alloc::vec::Vec;

use super::{Architecture, Heads, Model};
use crate::graph::{Batch, SparseBinary};
use crate::loss::query_gradient;
use crate::nn::{BoundParams, Tape, Var};
use crate::tensor::Matrix;

/// Literal-level view of a batch: incidence `[A_p; A_n]` (2n×m) and the
/// instance id of every literal row.
#[derive(Debug, Clone)]
pub struct LiteralGraph {
    incidence: SparseBinary,
    segments: Vec<u32>,
}

impl LiteralGraph {
    pub fn new(batch: &Batch) -> Self {
        let segs = batch.var_segments();
        LiteralGraph {
            incidence: batch.graph().literal_incidence(),
            segments: segs.iter().chain(segs).copied().collect(),
        }
    }

    /// Placeholder for architectures that work on variable rows.
    pub fn empty() -> Self {
        LiteralGraph {
            incidence: SparseBinary::from_entries(0, 0, &[]),
            segments: Vec::new(),
        }
    }

    pub fn incidence(&self) -> &SparseBinary {
        &self.incidence
    }
}

/// Everything a step reads from the batch.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub batch: &'a Batch,
    pub literals: &'a LiteralGraph,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct StepVars {
    pub state: Var,
    pub clauses: Var,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct StepNodes {
    pub next: StepVars,
    /// n×u candidate assignments.
    pub out: Var,
    /// n×d query, when the architecture has one.
    pub query: Option<Var>,
}

/// Swaps the positive-literal half of the rows with the negative half.
pub fn flip_literals(m: &Matrix) -> Matrix {
    let n = m.rows() / 2;
    Matrix::concat_rows(&[&m.slice_rows(n, 2 * n), &m.slice_rows(0, n)])
}

impl Model {
    pub(crate) fn step<'a>(&self, tape: &mut Tape<'a>, p: &BoundParams, ctx: &StepContext<'a>, s: StepVars, noise: Matrix) -> StepNodes {
        let alpha = self.config.grad_scale_alpha;
        let batch = ctx.batch;
        let graph = batch.graph();
        match &self.heads {
            Heads::QuerySat { q, c, v, o } => {
                let noise = tape.constant(noise);
                let q_in = tape.concat_cols(&[s.state, noise]);
                let q_logits = q.forward(tape, p, q_in);
                let query = tape.sigmoid(q_logits);
                let e = tape.clause_values(query, graph);

                let c_in = tape.concat_cols(&[s.clauses, e]);
                let c_hidden = c.forward(tape, p, c_in);
                let c_next = tape.pairnorm(c_hidden, batch.clause_segments());

                let pos_msg = tape.sparse_matmul(graph.a_pos(), c_next, false);
                let neg_msg = tape.sparse_matmul(graph.a_neg(), c_next, false);
                let grad = query_gradient(graph, tape.value(query), self.config.query_grad_mode).expect("query rows match the batch");
                let grad = tape.constant(grad);
                let v_in = tape.concat_cols(&[s.state, pos_msg, neg_msg, grad]);
                let v_hidden = v.forward(tape, p, v_in);
                let v_next = tape.pairnorm(v_hidden, batch.var_segments());

                let o_logits = o.forward(tape, p, v_next);
                let out = tape.sigmoid(o_logits);
                StepNodes {
                    next: StepVars {
                        state: tape.grad_scale(v_next, alpha),
                        clauses: tape.grad_scale(c_next, alpha),
                    },
                    out,
                    query: Some(query),
                }
            }
            Heads::NeuroCore { q, c, l, o } => {
                let n = graph.num_vars();
                let lits = ctx.literals;
                let pos = tape.slice_rows(s.state, 0, n);
                let neg = tape.slice_rows(s.state, n, 2 * n);

                let mut query = None;
                let mut e = None;
                if let Some(q) = q {
                    let noise = tape.constant(noise.clone());
                    let q_in = tape.concat_cols(&[pos, neg, noise]);
                    let q_logits = q.forward(tape, p, q_in);
                    let qv = tape.sigmoid(q_logits);
                    e = Some(tape.clause_values(qv, graph));
                    query = Some(qv);
                }

                // Without a query head the noise rides on the literal-to-clause
                // messages, positive literals `t` and negative `-t`; otherwise
                // identical clause rows normalize to zero.
                let sent = match (q, noise.cols()) {
                    (None, r) if r > 0 => {
                        let neg_noise = noise.map(|x| -x);
                        let lit_noise = tape.constant(Matrix::concat_rows(&[&noise, &neg_noise]));
                        tape.concat_cols(&[s.state, lit_noise])
                    }
                    _ => s.state,
                };
                let to_clauses = tape.sparse_matmul(lits.incidence(), sent, true);
                let mut c_parts = alloc::vec![s.clauses, to_clauses];
                c_parts.extend(e);
                let c_in = tape.concat_cols(&c_parts);
                let c_hidden = c.forward(tape, p, c_in);
                let c_next = tape.pairnorm(c_hidden, batch.clause_segments());

                let to_literals = tape.sparse_matmul(lits.incidence(), c_next, false);
                let flipped = tape.concat_rows(&[neg, pos]);
                let mut l_parts = alloc::vec![s.state, to_literals, flipped];
                if self.config.architecture == Architecture::NeuroCoreQueryG {
                    let qv = tape.value(query.expect("query variant has a query head"));
                    let g = query_gradient(graph, qv, self.config.query_grad_mode).expect("query rows match the batch");
                    let neg_g = g.map(|x| -x);
                    l_parts.push(tape.constant(Matrix::concat_rows(&[&g, &neg_g])));
                }
                let l_in = tape.concat_cols(&l_parts);
                let l_hidden = l.forward(tape, p, l_in);
                let l_next = tape.pairnorm(l_hidden, &lits.segments);

                let l_pos = tape.slice_rows(l_next, 0, n);
                let l_neg = tape.slice_rows(l_next, n, 2 * n);
                let o_in = tape.concat_cols(&[l_pos, l_neg]);
                let o_logits = o.forward(tape, p, o_in);
                let out = tape.sigmoid(o_logits);
                StepNodes {
                    next: StepVars {
                        state: tape.grad_scale(l_next, alpha),
                        clauses: tape.grad_scale(c_next, alpha),
                    },
                    out,
                    query,
                }
            }
        }
    }
}
