//! Training loop, validation, and batch evaluation.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{plan_batches, Batch, BatchError, FactorGraph};
use crate::model::{evaluate_batch, train_step, Model, ModelError, NoiseSource, StepView};
use crate::optim::{AdaBelief, AdaBeliefConfig, OptimError};
use crate::rng::{domain, stream, Rng, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f32,
    /// Recurrent steps unrolled per training iteration.
    pub train_steps: usize,
    pub iterations: u64,
    /// Maximum variables plus clauses per batch.
    pub node_budget: usize,
    pub seed: u64,
    /// Validate every this many iterations; 0 disables validation.
    pub validation_interval: u64,
    pub validation_steps: usize,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = AdaBeliefConfig::default();
        TrainConfig {
            learning_rate: opt.learning_rate,
            train_steps: 32,
            iterations: 10_000,
            node_budget: 20_000,
            seed: 0,
            validation_interval: 1000,
            validation_steps: 64,
            beta1: opt.beta1,
            beta2: opt.beta2,
            epsilon: opt.epsilon,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(TrainError::InvalidConfig(String::from("learning_rate must be positive")));
        }
        if self.train_steps == 0 {
            return Err(TrainError::InvalidConfig(String::from("train_steps must be at least 1")));
        }
        if self.node_budget == 0 {
            return Err(TrainError::InvalidConfig(String::from("node_budget must be positive")));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdaBeliefConfig {
        AdaBeliefConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("trainer state does not match the dataset: {0}")]
    StateMismatch(String),
}

/// Data-order position of a trainer, enough to resume bit-identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainerState {
    pub iteration: u64,
    pub epoch: u64,
    /// Instance order of the current epoch.
    pub order: Vec<usize>,
    /// Next batch of the current epoch.
    pub cursor: usize,
    pub shuffle: RngState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iteration: u64,
    pub loss: f64,
    pub instances: usize,
    /// Instances of the batch solved at some step of the unroll.
    pub solved: usize,
}

/// Owns the model and optimizer while borrowing the training graphs.
pub struct Trainer<'d> {
    config: TrainConfig,
    model: Model,
    optimizer: AdaBelief,
    data: &'d [FactorGraph],
    order: Vec<usize>,
    plan: Vec<Vec<usize>>,
    cursor: usize,
    epoch: u64,
    iteration: u64,
    shuffle: Rng,
}

fn node_count(g: &FactorGraph) -> usize {
    g.num_vars() + g.num_clauses()
}

impl<'d> Trainer<'d> {
    pub fn new(model: Model, data: &'d [FactorGraph], config: TrainConfig) -> Result<Self, TrainError> {
        let optimizer = AdaBelief::new(config.optimizer(), model.params());
        let shuffle = stream(config.seed, &[domain::SHUFFLE]);
        let state = TrainerState {
            iteration: 0,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
            shuffle: RngState::capture(&shuffle),
        };
        Trainer::resume(model, optimizer, data, config, state)
    }

    /// Continues from a saved position. An empty `order` starts a new epoch.
    pub fn resume(model: Model, optimizer: AdaBelief, data: &'d [FactorGraph], config: TrainConfig, state: TrainerState) -> Result<Self, TrainError> {
        config.validate()?;
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        // surface oversized instances before the first iteration
        plan_batches(data.iter().map(node_count), config.node_budget)?;
        let mut optimizer = optimizer;
        optimizer.config = config.optimizer();
        let mut trainer = Trainer {
            config,
            model,
            optimizer,
            data,
            order: Vec::new(),
            plan: Vec::new(),
            cursor: state.cursor,
            epoch: state.epoch,
            iteration: state.iteration,
            shuffle: state.shuffle.restore(),
        };
        if !state.order.is_empty() {
            let mut sorted = state.order.clone();
            sorted.sort_unstable();
            if sorted.len() != data.len() || sorted.iter().enumerate().any(|(i, &v)| i != v) {
                return Err(TrainError::StateMismatch(String::from("epoch order is not a permutation of the dataset")));
            }
            trainer.set_order(state.order)?;
            if trainer.cursor > trainer.plan.len() {
                return Err(TrainError::StateMismatch(String::from("cursor past the end of the epoch")));
            }
        }
        Ok(trainer)
    }

    fn set_order(&mut self, order: Vec<usize>) -> Result<(), TrainError> {
        let plan = plan_batches(order.iter().map(|&i| node_count(&self.data[i])), self.config.node_budget)?;
        self.plan = plan.into_iter().map(|bin| bin.into_iter().map(|p| order[p]).collect()).collect();
        self.order = order;
        Ok(())
    }

    fn next_batch(&mut self) -> Result<Vec<usize>, TrainError> {
        if self.order.is_empty() || self.cursor >= self.plan.len() {
            let mut order: Vec<usize> = (0..self.data.len()).collect();
            order.shuffle(&mut self.shuffle);
            if !self.order.is_empty() {
                self.epoch += 1;
            }
            self.set_order(order)?;
            self.cursor = 0;
        }
        let ids = self.plan[self.cursor].clone();
        self.cursor += 1;
        Ok(ids)
    }

    /// One optimization step on the next batch.
    pub fn step(&mut self) -> Result<IterationRecord, TrainError> {
        let ids = self.next_batch()?;
        let parts: Vec<&FactorGraph> = ids.iter().map(|&i| &self.data[i]).collect();
        let batch = Batch::from_graphs(&parts, ids);
        let seed = self.config.seed;
        let mut noise = NoiseSource::new(
            seed,
            &[domain::NOISE, self.iteration],
            batch.instance_ids(),
            self.model.config().noise_dims,
            self.model.config().noise_schedule,
        );
        let out = train_step(&self.model, &batch, self.config.train_steps, &mut noise)?;
        self.optimizer.update(self.model.params_mut(), &out.grads)?;
        self.iteration += 1;
        Ok(IterationRecord {
            iteration: self.iteration,
            loss: out.loss,
            instances: batch.num_instances(),
            solved: out.solved_at.iter().filter(|s| s.is_some()).count(),
        })
    }

    /// Whether validation is due after the latest iteration.
    pub fn validation_due(&self) -> bool {
        let every = self.config.validation_interval;
        every > 0 && self.iteration > 0 && (self.iteration.is_multiple_of(every) || self.iteration == self.config.iterations)
    }

    pub fn finished(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn optimizer(&self) -> &AdaBelief {
        &self.optimizer
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            iteration: self.iteration,
            epoch: self.epoch,
            order: self.order.clone(),
            cursor: self.cursor,
            shuffle: RngState::capture(&self.shuffle),
        }
    }

    pub fn into_parts(self) -> (Model, AdaBelief, TrainerState) {
        let state = self.state();
        (self.model, self.optimizer, state)
    }
}

/// Per-instance evaluation outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance: usize,
    /// 1-based step at which the instance was solved.
    pub exit_step: Option<usize>,
    pub assignment: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub results: Vec<InstanceResult>,
    pub steps: usize,
}

impl Evaluation {
    pub fn solved(&self) -> usize {
        self.results.iter().filter(|r| r.exit_step.is_some()).count()
    }

    pub fn solved_fraction(&self) -> f64 {
        if self.results.is_empty() {
            0.0
        } else {
            self.solved() as f64 / self.results.len() as f64
        }
    }
}

/// Noise stream root for evaluation runs under `seed`.
pub fn evaluation_noise(seed: u64, instance_ids: &[usize], model: &Model) -> NoiseSource {
    NoiseSource::new(
        seed,
        &[domain::VALIDATION],
        instance_ids,
        model.config().noise_dims,
        model.config().noise_schedule,
    )
}

/// Evaluates every graph with early exit. Instance ids are positions in
/// `graphs`, and noise depends only on `seed` and the id, so the outcome
/// does not depend on `node_budget`.
pub fn evaluate(
    model: &Model,
    graphs: &[FactorGraph],
    steps: usize,
    node_budget: usize,
    seed: u64,
    mut observer: Option<&mut dyn FnMut(&StepView<'_>)>,
) -> Result<Evaluation, TrainError> {
    let plan = plan_batches(graphs.iter().map(node_count), node_budget)?;
    let mut results: Vec<Option<InstanceResult>> = (0..graphs.len()).map(|_| None).collect();
    for ids in plan {
        let parts: Vec<&FactorGraph> = ids.iter().map(|&i| &graphs[i]).collect();
        let batch = Batch::from_graphs(&parts, ids);
        let mut noise = evaluation_noise(seed, batch.instance_ids(), model);
        let out = match observer.as_mut() {
            Some(obs) => evaluate_batch(model, &batch, steps, &mut noise, Some(&mut **obs)),
            None => evaluate_batch(model, &batch, steps, &mut noise, None),
        };
        for (k, &id) in batch.instance_ids().iter().enumerate() {
            results[id] = Some(InstanceResult {
                instance: id,
                exit_step: out.exit_steps[k],
                assignment: out.assignments[k].clone(),
            });
        }
    }
    Ok(Evaluation {
        results: results.into_iter().map(|r| r.expect("every instance is planned")).collect(),
        steps,
    })
}

#[cfg(test)]
mod tests;
