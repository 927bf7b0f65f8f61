use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::step::{LiteralGraph, StepContext, StepVars};
use super::*;
use crate::cnf::CnfFormula;
use crate::graph::{Batch, FactorGraph};
use crate::loss::{multi_assignment_loss, rank_weights};
use crate::nn::Tape;
use crate::rng::stream;

fn small_formula(seed: u64, n: usize, m: usize) -> CnfFormula {
    let mut rng = stream(seed, &[]);
    let clauses: Vec<Vec<i32>> = (0..m)
        .map(|_| {
            let mut vars: Vec<i32> = Vec::new();
            while vars.len() < 3 {
                let v = rng.random_range(1..=n as i32);
                if !vars.contains(&v) {
                    vars.push(v);
                }
            }
            vars.into_iter().map(|v| if rng.random_bool(0.5) { v } else { -v }).collect()
        })
        .collect();
    let refs: Vec<&[i32]> = clauses.iter().map(Vec::as_slice).collect();
    CnfFormula::from_ints(n, &refs).unwrap()
}

fn config(arch: Architecture) -> ModelConfig {
    ModelConfig {
        feature_maps: 8,
        assignments: 3,
        ..ModelConfig::desk(arch)
    }
}

fn collect_outputs(model: &Model, batch: &Batch, steps: usize, seed: u64) -> (EvalOutput, Vec<Matrix>) {
    let mut outs = Vec::new();
    let mut noise = NoiseSource::new(seed, &[7], batch.instance_ids(), model.config().noise_dims, NoiseSchedule::PerStep);
    let mut obs = |v: &StepView<'_>| outs.push(v.outputs.clone());
    let eval = evaluate_batch(model, batch, steps, &mut noise, Some(&mut obs));
    (eval, outs)
}

#[test]
fn outputs_are_in_open_unit_interval() {
    let f = small_formula(1, 6, 20);
    let g = FactorGraph::new(&f);
    let batch = Batch::single(&g);
    for arch in Architecture::ALL {
        for r in [0, 4] {
            let cfg = ModelConfig { noise_dims: r, ..config(arch) };
            let model = Model::new(cfg, 3).unwrap();
            let (_, outs) = collect_outputs(&model, &batch, 3, 5);
            for out in outs {
                assert_eq!(out.shape(), (6, 3));
                assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0), "{arch:?}");
            }
        }
    }
}

#[test]
fn flip_is_an_involution() {
    let m = Matrix::from_vec(4, 2, (0..8).map(|i| i as f32).collect());
    assert_eq!(flip_literals(&flip_literals(&m)), m);
    assert_eq!(flip_literals(&m).row(0), m.row(2));
}

#[test]
fn literal_incidence_stacks_polarities() {
    let f = CnfFormula::from_ints(2, &[&[1, -2], &[2]]).unwrap();
    let g = FactorGraph::new(&f);
    let lits = LiteralGraph::new(&Batch::single(&g));
    assert_eq!(lits.incidence().to_dense(), g.a_pos().stack_rows(g.a_neg()).to_dense());
}

#[test]
fn gradient_feature_widens_literal_update() {
    let d = 8;
    let q = Model::new(config(Architecture::NeuroCoreQuery), 0).unwrap();
    let qg = Model::new(config(Architecture::NeuroCoreQueryG), 0).unwrap();
    let plain = Model::new(config(Architecture::NeuroCore), 0).unwrap();
    assert_eq!(qg.state_update_input_width(), q.state_update_input_width() + d);
    assert_eq!(q.state_update_input_width(), plain.state_update_input_width());
    assert!(plain.params().by_name("mlp_q.layer0.weight").is_none());
}

#[test]
fn batching_is_invisible_to_each_instance() {
    let f1 = small_formula(2, 5, 18);
    let f2 = small_formula(3, 7, 25);
    let (g1, g2) = (FactorGraph::new(&f1), FactorGraph::new(&f2));
    for arch in Architecture::ALL {
        let model = Model::new(config(arch), 11).unwrap();
        let both = Batch::from_graphs(&[&g1, &g2], vec![10, 20]);
        let (eval_both, outs_both) = collect_outputs(&model, &both, 4, 9);
        let (eval1, outs1) = collect_outputs(&model, &Batch::from_graphs(&[&g1], vec![10]), 4, 9);
        let (eval2, outs2) = collect_outputs(&model, &Batch::from_graphs(&[&g2], vec![20]), 4, 9);
        for (t, out) in outs_both.iter().enumerate() {
            if t < outs1.len() {
                assert_eq!(out.slice_rows(0, 5), outs1[t], "{arch:?} step {t}");
            }
            if t < outs2.len() {
                assert_eq!(out.slice_rows(5, 12), outs2[t], "{arch:?} step {t}");
            }
        }
        assert_eq!(eval_both.exit_steps, vec![eval1.exit_steps[0], eval2.exit_steps[0]]);
        assert_eq!(eval_both.assignments, vec![eval1.assignments[0].clone(), eval2.assignments[0].clone()]);
    }
}

#[test]
fn trivially_satisfied_formula_exits_at_step_one() {
    let f = CnfFormula::from_ints(2, &[&[1, -1], &[2, -2]]).unwrap();
    let g = FactorGraph::new(&f);
    let model = Model::new(config(Architecture::QuerySat), 0).unwrap();
    let (eval, outs) = collect_outputs(&model, &Batch::single(&g), 50, 0);
    assert_eq!(eval.exit_steps, vec![Some(1)]);
    assert_eq!(eval.steps_run, 1);
    assert_eq!(outs.len(), 1);
}

#[test]
fn unsatisfiable_formula_runs_every_step() {
    let f = CnfFormula::from_ints(1, &[&[1], &[-1]]).unwrap();
    let g = FactorGraph::new(&f);
    let model = Model::new(config(Architecture::QuerySat), 0).unwrap();
    let (eval, _) = collect_outputs(&model, &Batch::single(&g), 40, 0);
    assert_eq!(eval.exit_steps, vec![None]);
    assert_eq!(eval.steps_run, 40);
}

#[test]
fn solved_flags_and_frozen_assignments_are_monotone() {
    let fs: Vec<CnfFormula> = (0..6).map(|s| small_formula(40 + s, 5, 12)).collect();
    let gs: Vec<FactorGraph> = fs.iter().map(FactorGraph::new).collect();
    let refs: Vec<&FactorGraph> = gs.iter().collect();
    let batch = Batch::from_graphs(&refs, (0..6).collect());
    let model = Model::new(config(Architecture::QuerySat), 5).unwrap();
    let mut history: Vec<Vec<bool>> = Vec::new();
    let mut noise = NoiseSource::new(1, &[], batch.instance_ids(), 4, NoiseSchedule::PerStep);
    let mut obs = |v: &StepView<'_>| history.push(v.solved.to_vec());
    let eval = evaluate_batch(&model, &batch, 30, &mut noise, Some(&mut obs));
    for w in history.windows(2) {
        assert!(w[0].iter().zip(&w[1]).all(|(&a, &b)| !a || b));
    }
    for (k, e) in eval.exit_steps.iter().enumerate() {
        if e.is_some() {
            assert!(fs[k].is_satisfied_by(&eval.assignments[k]));
        }
    }
}

/// Replays evaluation outputs through the scalar loss to rebuild the
/// training objective step by step.
#[test]
fn training_loss_matches_hand_stepped_trace() {
    let f1 = small_formula(7, 3, 4);
    let f2 = CnfFormula::from_ints(2, &[&[1, 2], &[-1, 2]]).unwrap();
    let formulas = [f1, f2];
    let gs: Vec<FactorGraph> = formulas.iter().map(FactorGraph::new).collect();
    let batch = Batch::from_graphs(&[&gs[0], &gs[1]], vec![0, 1]);
    for arch in Architecture::ALL {
        let model = Model::new(config(arch), 2).unwrap();
        let mk = || NoiseSource::new(3, &[1], batch.instance_ids(), 4, NoiseSchedule::PerStep);
        let out = train_step(&model, &batch, 2, &mut mk()).unwrap();

        let mut outs = Vec::new();
        let mut obs = |v: &StepView<'_>| outs.push(v.outputs.clone());
        evaluate_batch(&model, &batch, 2, &mut mk(), Some(&mut obs));
        let mut expected = Vec::new();
        let mut done = [false, false];
        for (t, o) in outs.iter().enumerate() {
            let mut step_loss = 0.0;
            for k in 0..2 {
                let rows = batch.var_range(k);
                let mal = multi_assignment_loss(&o.slice_rows(rows.start, rows.end), &formulas[k]).unwrap();
                if !done[k] {
                    step_loss += mal.loss / 2.0;
                }
                let bits: Vec<bool> = (0..rows.len()).map(|r| o.get(rows.start + r, mal.best) >= 0.5).collect();
                if !done[k] && formulas[k].is_satisfied_by(&bits) {
                    done[k] = true;
                    assert!(out.solved_at[k].is_some_and(|s| s == t + 1));
                }
            }
            expected.push(step_loss);
        }
        // if evaluation exited early every instance was solved; later steps are fully masked
        expected.resize(2, 0.0);
        for (got, want) in out.step_losses.iter().zip(&expected) {
            assert!((got - want).abs() <= 1e-4 * want.abs().max(1.0), "{arch:?}: {got} vs {want}");
        }
        assert!((out.loss - expected.iter().sum::<f64>()).abs() < 1e-4 * out.loss.abs().max(1.0));
    }
}

/// With `alpha = 1` no gradient crosses a step boundary, so a two-step
/// unroll's gradient is the one-step gradient plus the gradient of the
/// second step's loss with its incoming state held fixed.
#[test]
fn full_gradient_scaling_cuts_the_recurrence() {
    let f = small_formula(9, 6, 22);
    let g = FactorGraph::new(&f);
    let batch = Batch::single(&g);
    for arch in [Architecture::QuerySat, Architecture::NeuroCoreQueryG] {
        let cfg = ModelConfig {
            grad_scale_alpha: 1.0,
            ..config(arch)
        };
        let model = Model::new(cfg, 4).unwrap();
        let mk = || NoiseSource::new(8, &[], batch.instance_ids(), 4, NoiseSchedule::PerStep);
        let one = train_step(&model, &batch, 1, &mut mk()).unwrap();
        let two = train_step(&model, &batch, 2, &mut mk()).unwrap();
        assert_eq!(one.solved_at[0], None, "fixture must stay unsolved for the loss to be unmasked");

        // second step in isolation
        let mut noise = mk();
        let n1 = noise.next(&batch);
        let n2 = noise.next(&batch);
        let lits = if arch.literal_rows() {
            LiteralGraph::new(&batch)
        } else {
            LiteralGraph::empty()
        };
        let ctx = StepContext {
            batch: &batch,
            literals: &lits,
        };
        let init = model.initial_state(g.num_vars(), g.num_clauses(), 1);
        let (state1, clauses1) = {
            let mut tape = Tape::new();
            let p = model.params().bind(&mut tape, false);
            let s = StepVars {
                state: tape.constant(init.var_state.clone()),
                clauses: tape.constant(init.clause_state.clone()),
            };
            let nodes = model.step(&mut tape, &p, &ctx, s, n1);
            (tape.value(nodes.next.state).clone(), tape.value(nodes.next.clauses).clone())
        };
        let mut tape = Tape::new();
        let p = model.params().bind(&mut tape, true);
        let s = StepVars {
            state: tape.constant(state1),
            clauses: tape.constant(clauses1),
        };
        let nodes = model.step(&mut tape, &p, &ctx, s, n2);
        let losses = tape.instance_log_losses(nodes.out, g_ref(&batch), batch.clause_offsets());
        let row: Vec<f64> = tape.value(losses).row(0).iter().map(|&v| v as f64).collect();
        let (w, _) = rank_weights(&row);
        let w = Matrix::from_vec(1, row.len(), w.iter().map(|&x| x as f32).collect());
        let weighted = tape.mul_const(losses, w);
        let total = tape.sum(weighted);
        let mut grads = tape.backward(total).unwrap();
        for (i, &v) in p.vars().iter().enumerate() {
            let second = grads.take(v);
            let mut expect = one.grads[i].clone().unwrap_or_else(|| Matrix::zeros(0, 0));
            if let Some(s) = second {
                if expect.rows() == 0 {
                    expect = s;
                } else {
                    expect.add_assign(&s);
                }
            }
            let got = two.grads[i].as_ref().unwrap();
            for (a, b) in got.data().iter().zip(expect.data()) {
                assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{arch:?} param {i}: {a} vs {b}");
            }
        }
    }
}

fn g_ref(batch: &Batch) -> &FactorGraph {
    batch.graph()
}

#[test]
fn relabeling_variables_permutes_one_step_outputs() {
    let f = small_formula(12, 6, 20);
    let perm = [3usize, 0, 5, 1, 4, 2]; // old var i becomes perm[i]
    let clauses: Vec<Vec<crate::cnf::Literal>> = f
        .clauses()
        .iter()
        .map(|c| c.iter().map(|l| crate::cnf::Literal::from_var(perm[l.var()], l.is_negated())).collect())
        .collect();
    let fp = CnfFormula::new(6, clauses).unwrap();
    let (g, gp) = (FactorGraph::new(&f), FactorGraph::new(&fp));
    let (b, bp) = (Batch::single(&g), Batch::single(&gp));
    let model = Model::new(config(Architecture::QuerySat), 6).unwrap();
    let mut rng = stream(99, &[]);
    let noise = Matrix::from_vec(6, 4, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect());
    let mut noise_p = Matrix::zeros(6, 4);
    for i in 0..6 {
        noise_p.row_mut(perm[i]).copy_from_slice(noise.row(i));
    }
    let run = |batch: &Batch, noise: Matrix| {
        let lits = LiteralGraph::empty();
        let ctx = StepContext { batch, literals: &lits };
        let mut tape = Tape::new();
        let p = model.params().bind(&mut tape, false);
        let init = model.initial_state(6, batch.graph().num_clauses(), 1);
        let s = StepVars {
            state: tape.constant(init.var_state),
            clauses: tape.constant(init.clause_state),
        };
        let nodes = model.step(&mut tape, &p, &ctx, s, noise);
        tape.value(nodes.out).clone()
    };
    let out = run(&b, noise);
    let out_p = run(&bp, noise_p);
    for i in 0..6 {
        for (a, c) in out.row(i).iter().zip(out_p.row(perm[i])) {
            assert!((a - c).abs() < 1e-5);
        }
    }
}

#[test]
fn parameter_table_is_checked() {
    let model = Model::new(config(Architecture::QuerySat), 1).unwrap();
    let other = Model::new(config(Architecture::NeuroCore), 1).unwrap();
    assert!(Model::from_params(*model.config(), model.params().clone()).is_ok());
    assert!(matches!(
        Model::from_params(*model.config(), other.params().clone()),
        Err(ModelError::ParameterMismatch(_))
    ));
}

#[test]
fn per_pass_noise_repeats() {
    let f = small_formula(1, 5, 10);
    let g = FactorGraph::new(&f);
    let b = Batch::single(&g);
    let mut per_pass = NoiseSource::new(1, &[], b.instance_ids(), 4, NoiseSchedule::PerPass);
    let mut per_step = NoiseSource::new(1, &[], b.instance_ids(), 4, NoiseSchedule::PerStep);
    let a = per_pass.next(&b);
    assert_eq!(per_pass.next(&b), a);
    assert_eq!(per_step.next(&b), a);
    assert_ne!(per_step.next(&b), a);
}

#[test]
fn nan_outputs_abort_training_with_a_diagnostic() {
    let f = small_formula(5, 4, 10);
    let g = FactorGraph::new(&f);
    let batch = Batch::from_graphs(&[&g], vec![42]);
    let mut model = Model::new(config(Architecture::QuerySat), 0).unwrap();
    let last = model.params_mut().iter_mut().last().unwrap();
    last.value.data_mut()[0] = f32::NAN;
    let mut noise = NoiseSource::new(0, &[], batch.instance_ids(), 4, NoiseSchedule::PerStep);
    assert_eq!(
        train_step(&model, &batch, 3, &mut noise).err(),
        Some(ModelError::NonFiniteLoss { step: 1, instance: 42 })
    );
}

/// Uniform-width clauses give identical clause rows at the first step; the
/// noise path keeps normalization away from all-zero inputs.
#[test]
fn plain_baseline_gradients_stay_bounded_on_uniform_clauses() {
    let fs: Vec<CnfFormula> = (0..4).map(|s| small_formula(60 + s, 8, 30)).collect();
    let gs: Vec<FactorGraph> = fs.iter().map(FactorGraph::new).collect();
    let refs: Vec<&FactorGraph> = gs.iter().collect();
    let batch = Batch::from_graphs(&refs, (0..4).collect());
    let model = Model::new(ModelConfig::desk(Architecture::NeuroCore), 0).unwrap();
    let mut noise = NoiseSource::new(0, &[], batch.instance_ids(), 4, NoiseSchedule::PerStep);
    let out = train_step(&model, &batch, 16, &mut noise).unwrap();
    let max = out.grads.iter().flatten().flat_map(|g| g.data().iter().map(|v| v.abs())).fold(0.0f32, f32::max);
    assert!(max < 100.0, "largest gradient entry {max}");
}
