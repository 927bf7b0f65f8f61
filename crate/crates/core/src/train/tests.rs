use alloc::vec::Vec;

use super::*;
use crate::generators::{generate, GenSpec, Task};
use crate::model::{Architecture, ModelConfig};
use crate::solvers::DEFAULT_DECISION_BUDGET;

fn graphs(task: Task, min: usize, max: usize, count: usize, seed: u64) -> Vec<FactorGraph> {
    let spec = GenSpec {
        task,
        min_size: min,
        max_size: max,
        count,
        seed,
    };
    generate(&spec, DEFAULT_DECISION_BUDGET)
        .unwrap()
        .iter()
        .map(|g| FactorGraph::new(&g.formula))
        .collect()
}

fn small_model(arch: Architecture, seed: u64) -> Model {
    Model::new(
        ModelConfig {
            feature_maps: 16,
            ..ModelConfig::desk(arch)
        },
        seed,
    )
    .unwrap()
}

fn config(iterations: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 2e-3,
        train_steps: 8,
        iterations,
        node_budget: 150,
        seed: 5,
        validation_interval: 0,
        ..TrainConfig::default()
    }
}

fn run(trainer: &mut Trainer<'_>, n: u64) -> Vec<f64> {
    (0..n).map(|_| trainer.step().unwrap().loss).collect()
}

#[test]
fn defaults_follow_the_training_recipe() {
    let c = TrainConfig::default();
    assert_eq!(c.learning_rate, 2e-4);
    assert_eq!(c.train_steps, 32);
    assert_eq!(c.node_budget, 20_000);
    assert_eq!(c.validation_steps, 64);
    assert_eq!((c.beta1, c.beta2, c.epsilon), (0.9, 0.999, 1e-16));
}

#[test]
fn invalid_configs_are_rejected() {
    let data = graphs(Task::ThreeSat, 5, 6, 2, 0);
    let bad = [
        TrainConfig {
            learning_rate: 0.0,
            ..config(1)
        },
        TrainConfig { train_steps: 0, ..config(1) },
        TrainConfig { node_budget: 10, ..config(1) },
    ];
    for c in bad {
        assert!(Trainer::new(small_model(Architecture::QuerySat, 0), &data, c).is_err());
    }
    assert_eq!(
        Trainer::new(small_model(Architecture::QuerySat, 0), &[], config(1)).err(),
        Some(TrainError::EmptyDataset)
    );
}

#[test]
fn short_run_lowers_the_running_loss() {
    let data = graphs(Task::ThreeSat, 5, 8, 20, 1);
    let mut trainer = Trainer::new(small_model(Architecture::QuerySat, 2), &data, config(100)).unwrap();
    let losses = run(&mut trainer, 100);
    let first: f64 = losses[..20].iter().sum();
    let last: f64 = losses[80..].iter().sum();
    assert!(last < first, "running loss went from {first} to {last}");
    assert!(trainer.finished());
}

#[test]
fn loss_trace_is_seed_deterministic() {
    let data = graphs(Task::KSat, 3, 8, 12, 2);
    let trace = || {
        let mut t = Trainer::new(small_model(Architecture::NeuroCoreQueryG, 3), &data, config(15)).unwrap();
        run(&mut t, 15)
    };
    assert_eq!(trace(), trace());
}

#[test]
fn resuming_matches_an_uninterrupted_run() {
    let data = graphs(Task::ThreeSat, 5, 9, 10, 3);
    let mut straight = Trainer::new(small_model(Architecture::QuerySat, 4), &data, config(12)).unwrap();
    let full = run(&mut straight, 12);

    let mut first = Trainer::new(small_model(Architecture::QuerySat, 4), &data, config(12)).unwrap();
    let mut trace = run(&mut first, 5);
    let (model, opt, state) = first.into_parts();
    let mut second = Trainer::resume(model, opt, &data, config(12), state).unwrap();
    trace.extend(run(&mut second, 7));
    assert_eq!(trace, full);
    assert_eq!(second.model().params(), straight.model().params());
}

#[test]
fn corrupted_order_is_rejected() {
    let data = graphs(Task::ThreeSat, 5, 6, 4, 4);
    let mut t = Trainer::new(small_model(Architecture::QuerySat, 0), &data, config(3)).unwrap();
    t.step().unwrap();
    let (model, opt, mut state) = t.into_parts();
    state.order[0] = state.order[1];
    assert!(matches!(
        Trainer::resume(model, opt, &data, config(3), state),
        Err(TrainError::StateMismatch(_))
    ));
}

#[test]
fn epochs_visit_every_instance() {
    let data = graphs(Task::ThreeSat, 5, 6, 9, 5);
    let mut t = Trainer::new(small_model(Architecture::QuerySat, 0), &data, config(100)).unwrap();
    let mut seen = 0;
    while t.epoch() == 0 {
        seen += t.step().unwrap().instances;
    }
    // the step that opened epoch 1 drew from it
    let last = t.plan[0].len();
    assert_eq!(seen - last, data.len());
}

#[test]
fn evaluation_ignores_the_batch_budget() {
    let data = graphs(Task::ThreeSat, 5, 10, 12, 6);
    let model = small_model(Architecture::QuerySat, 7);
    let a = evaluate(&model, &data, 20, 120, 9, None).unwrap();
    let b = evaluate(&model, &data, 20, 10_000, 9, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn more_steps_never_lose_solves() {
    let data = graphs(Task::ThreeSat, 5, 10, 30, 7);
    let mut t = Trainer::new(small_model(Architecture::QuerySat, 8), &data, config(40)).unwrap();
    run(&mut t, 40);
    let model = t.model();
    let one = evaluate(model, &data, 1, 400, 1, None).unwrap();
    let many = evaluate(model, &data, 64, 400, 1, None).unwrap();
    assert!(many.solved() >= one.solved());
    for (r1, r64) in one.results.iter().zip(&many.results) {
        if r1.exit_step.is_some() {
            assert_eq!(r1, r64);
        }
    }
    for r in &many.results {
        if r.exit_step.is_some() {
            assert!(data[r.instance].to_formula().is_satisfied_by(&r.assignment));
        }
    }
}

#[test]
fn untrained_model_rarely_solves_hard_instances() {
    let data = graphs(Task::ThreeSat, 50, 60, 20, 8);
    let model = Model::new(ModelConfig::desk(Architecture::QuerySat), 1).unwrap();
    let eval = evaluate(&model, &data, 64, 20_000, 0, None).unwrap();
    assert!(eval.solved_fraction() < 0.05, "{}", eval.solved_fraction());
}

#[test]
fn validation_schedule() {
    let data = graphs(Task::ThreeSat, 5, 6, 3, 9);
    let c = TrainConfig {
        validation_interval: 4,
        ..config(10)
    };
    let mut t = Trainer::new(small_model(Architecture::QuerySat, 0), &data, c).unwrap();
    let mut due = Vec::new();
    while !t.finished() {
        t.step().unwrap();
        if t.validation_due() {
            due.push(t.iteration());
        }
    }
    assert_eq!(due, [4, 8, 10]);
}
