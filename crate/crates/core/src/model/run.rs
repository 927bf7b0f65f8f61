//! Unrolled training passes and early-exit evaluation.

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use super::step::{LiteralGraph, StepContext, StepVars};
use super::{Model, ModelError, NoiseSchedule};
use crate::graph::Batch;
use crate::loss::{self, rank_weights};
use crate::nn::Tape;
use crate::rng::{stream, Rng};
use crate::tensor::Matrix;

/// Per-instance Gaussian noise streams, so an instance sees the same noise
/// whatever batch it lands in.
pub struct NoiseSource {
    rngs: Vec<Rng>,
    dims: usize,
    schedule: NoiseSchedule,
    cached: Option<Matrix>,
}

impl NoiseSource {
    /// One stream per instance id, derived from `base` and `prefix ++ [id]`.
    pub fn new(base: u64, prefix: &[u64], instance_ids: &[usize], dims: usize, schedule: NoiseSchedule) -> Self {
        let rngs = instance_ids
            .iter()
            .map(|&id| {
                let mut path = prefix.to_vec();
                path.push(id as u64);
                stream(base, &path)
            })
            .collect();
        NoiseSource {
            rngs,
            dims,
            schedule,
            cached: None,
        }
    }

    /// n×r noise for the next step.
    pub fn next(&mut self, batch: &Batch) -> Matrix {
        if let (NoiseSchedule::PerPass, Some(m)) = (self.schedule, &self.cached) {
            return m.clone();
        }
        let n = batch.graph().num_vars();
        let mut m = Matrix::zeros(n, self.dims);
        for (k, rng) in self.rngs.iter_mut().enumerate() {
            for row in batch.var_range(k) {
                for v in m.row_mut(row) {
                    *v = StandardNormal.sample(rng);
                }
            }
        }
        if self.schedule == NoiseSchedule::PerPass {
            self.cached = Some(m.clone());
        }
        m
    }
}

/// Result of one differentiated unroll.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Sum of the per-step losses.
    pub loss: f64,
    pub step_losses: Vec<f64>,
    /// Gradient of `loss` for every parameter, in store order.
    pub grads: Vec<Option<Matrix>>,
    /// First step (1-based) at which each instance's best candidate satisfied it.
    pub solved_at: Vec<Option<usize>>,
}

/// Rounded column `col` of the candidate matrix.
fn column_bits(out: &Matrix, col: usize) -> Vec<bool> {
    (0..out.rows()).map(|r| out.get(r, col) >= 0.5).collect()
}

fn best_columns(losses: &Matrix) -> Vec<usize> {
    (0..losses.rows())
        .map(|k| {
            let row: Vec<f64> = losses.row(k).iter().map(|&v| v as f64).collect();
            loss::best_column(&row)
        })
        .collect()
}

fn literal_graph(model: &Model, batch: &Batch) -> LiteralGraph {
    if model.config.architecture.literal_rows() {
        LiteralGraph::new(batch)
    } else {
        LiteralGraph::empty()
    }
}

/// Runs `steps` recurrent steps on one batch and differentiates the summed
/// multi-assignment loss. Each step's loss averages the rank-weighted loss
/// over the batch's instances; an instance stops contributing after the
/// step at which its best candidate first satisfies it, while its state
/// keeps evolving.
pub fn train_step(model: &Model, batch: &Batch, steps: usize, noise: &mut NoiseSource) -> Result<TrainOutput, ModelError> {
    let graph = batch.graph();
    let instances = batch.num_instances();
    let lits = literal_graph(model, batch);
    let ctx = StepContext { batch, literals: &lits };
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape, true);
    let init = model.initial_state(graph.num_vars(), graph.num_clauses(), instances);
    let mut s = StepVars {
        state: tape.constant(init.var_state),
        clauses: tape.constant(init.clause_state),
    };
    let u = model.config.assignments;
    let inv_b = 1.0 / instances as f64;
    let mut solved_at: Vec<Option<usize>> = vec![None; instances];
    let mut step_losses = Vec::with_capacity(steps);
    let mut total = None;
    for t in 0..steps {
        let nodes = model.step(&mut tape, &bound, &ctx, s, noise.next(batch));
        let losses = tape.instance_log_losses(nodes.out, graph, batch.clause_offsets());
        let lv = tape.value(losses);
        // the loss clamp would hide NaN outputs, so check them directly
        let out = tape.value(nodes.out);
        for k in 0..instances {
            if batch.var_range(k).any(|r| out.row(r).iter().any(|v| !v.is_finite())) {
                return Err(ModelError::NonFiniteLoss {
                    step: t + 1,
                    instance: batch.instance_ids()[k],
                });
            }
        }
        let mut weights = Matrix::zeros(instances, u);
        let mut step_loss = 0.0;
        for k in 0..instances {
            if solved_at[k].is_some() {
                continue;
            }
            let row: Vec<f64> = lv.row(k).iter().map(|&v| v as f64).collect();
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteLoss {
                    step: t + 1,
                    instance: batch.instance_ids()[k],
                });
            }
            let (w, _) = rank_weights(&row);
            for (j, wj) in w.iter().enumerate() {
                weights.set(k, j, (wj * inv_b) as f32);
                step_loss += wj * row[j] * inv_b;
            }
        }
        let best = best_columns(lv);
        for k in 0..instances {
            if solved_at[k].is_none() && batch.instance_satisfied(k, &column_bits(out, best[k])) {
                solved_at[k] = Some(t + 1);
            }
        }
        step_losses.push(step_loss);
        let weighted = tape.mul_const(losses, weights);
        let step_total = tape.sum(weighted);
        total = Some(match total {
            None => step_total,
            Some(acc) => tape.add(acc, step_total),
        });
        s = nodes.next;
    }
    let total = total.expect("at least one step");
    let mut grads = tape.backward(total).expect("summed loss is a scalar");
    let grads: Vec<Option<Matrix>> = bound.vars().iter().map(|&v| grads.take(v)).collect();
    for (g, p) in grads.iter().zip(model.params.iter()) {
        if g.as_ref().is_some_and(|g| g.data().iter().any(|v| !v.is_finite())) {
            return Err(ModelError::NonFiniteGradient(p.name.clone()));
        }
    }
    Ok(TrainOutput {
        loss: step_losses.iter().sum(),
        step_losses,
        grads,
        solved_at,
    })
}

/// What an evaluation observer sees after every step.
pub struct StepView<'v> {
    /// 1-based step number.
    pub step: usize,
    pub batch: &'v Batch,
    /// n×d query, for architectures that have one.
    pub query: Option<&'v Matrix>,
    /// n×u candidate assignments.
    pub outputs: &'v Matrix,
    /// Best candidate column per instance at this step.
    pub best: &'v [usize],
    /// Solved flags after this step.
    pub solved: &'v [bool],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalOutput {
    /// Per-instance assignment: frozen at the exit step, else the last step's best candidate.
    pub assignments: Vec<Vec<bool>>,
    /// 1-based exit step, `None` when the instance was never solved.
    pub exit_steps: Vec<Option<usize>>,
    pub steps_run: usize,
}

impl EvalOutput {
    pub fn solved_count(&self) -> usize {
        self.exit_steps.iter().filter(|e| e.is_some()).count()
    }
}

/// Evaluation with per-instance early exit. A fresh tape is used for every
/// step, so memory does not grow with `steps`.
pub fn evaluate_batch(model: &Model, batch: &Batch, steps: usize, noise: &mut NoiseSource, mut observer: Option<&mut dyn FnMut(&StepView<'_>)>) -> EvalOutput {
    let graph = batch.graph();
    let instances = batch.num_instances();
    let lits = literal_graph(model, batch);
    let ctx = StepContext { batch, literals: &lits };
    let mut state = model.initial_state(graph.num_vars(), graph.num_clauses(), instances);
    let mut exit_steps: Vec<Option<usize>> = vec![None; instances];
    let mut assignments: Vec<Vec<bool>> = (0..instances).map(|k| vec![false; batch.var_range(k).len()]).collect();
    let mut steps_run = 0;
    for t in 0..steps {
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape, false);
        let s = StepVars {
            state: tape.constant(core::mem::replace(&mut state.var_state, Matrix::zeros(0, 0))),
            clauses: tape.constant(core::mem::replace(&mut state.clause_state, Matrix::zeros(0, 0))),
        };
        let nodes = model.step(&mut tape, &bound, &ctx, s, noise.next(batch));
        let out = tape.value(nodes.out);
        let losses = loss::instance_log_losses(graph, batch.clause_offsets(), out).expect("outputs match the batch");
        let best = best_columns(&losses);
        for k in 0..instances {
            if exit_steps[k].is_some() {
                continue;
            }
            let bits = column_bits(out, best[k]);
            let range = batch.var_range(k);
            assignments[k].copy_from_slice(&bits[range]);
            if batch.instance_satisfied(k, &bits) {
                exit_steps[k] = Some(t + 1);
                state.solved[k] = true;
            }
        }
        steps_run = t + 1;
        state.step = steps_run;
        if let Some(obs) = observer.as_mut() {
            obs(&StepView {
                step: t + 1,
                batch,
                query: nodes.query.map(|q| tape.value(q)),
                outputs: out,
                best: &best,
                solved: &state.solved,
            });
        }
        state.var_state = tape.value(nodes.next.state).clone();
        state.clause_state = tape.value(nodes.next.clauses).clone();
        if state.solved.iter().all(|&s| s) {
            break;
        }
    }
    EvalOutput {
        assignments,
        exit_steps,
        steps_run,
    }
}
