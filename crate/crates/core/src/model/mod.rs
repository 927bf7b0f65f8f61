//! Recurrent solver models: QuerySAT and the NeuroCore baseline with its
//! query and query-plus-gradient variants.

mod run;
mod step;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::GradientMode;
use crate::nn::{init_mlp, Mlp, ParamStore};
use crate::rng::{domain, stream};
use crate::tensor::Matrix;

pub use run::{evaluate_batch, train_step, EvalOutput, NoiseSource, StepView, TrainOutput};
pub use step::{flip_literals, LiteralGraph, StepContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "querysat")]
    QuerySat,
    #[serde(rename = "neurocore")]
    NeuroCore,
    #[serde(rename = "neurocore_query")]
    NeuroCoreQuery,
    #[serde(rename = "neurocore_query_g")]
    NeuroCoreQueryG,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::QuerySat,
        Architecture::NeuroCore,
        Architecture::NeuroCoreQuery,
        Architecture::NeuroCoreQueryG,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::QuerySat => "querysat",
            Architecture::NeuroCore => "neurocore",
            Architecture::NeuroCoreQuery => "neurocore_query",
            Architecture::NeuroCoreQueryG => "neurocore_query_g",
        }
    }

    pub fn parse(s: &str) -> Option<Architecture> {
        Architecture::ALL.into_iter().find(|a| a.name() == s)
    }

    /// Whether the model evaluates a query each step.
    pub fn has_query(self) -> bool {
        !matches!(self, Architecture::NeuroCore)
    }

    /// Whether literal or variable states live on 2n literal rows.
    pub fn literal_rows(self) -> bool {
        !matches!(self, Architecture::QuerySat)
    }
}

/// When the noise features are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSchedule {
    #[default]
    PerStep,
    PerPass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub feature_maps: usize,
    pub noise_dims: usize,
    pub assignments: usize,
    pub grad_scale_alpha: f32,
    pub query_grad_mode: GradientMode,
    #[serde(default)]
    pub noise_schedule: NoiseSchedule,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: Architecture::QuerySat,
            feature_maps: 128,
            noise_dims: 4,
            assignments: 8,
            grad_scale_alpha: 0.2,
            query_grad_mode: GradientMode::ClauseSum,
            noise_schedule: NoiseSchedule::PerStep,
        }
    }
}

impl ModelConfig {
    /// Desk-scale preset: 32 feature maps, 4 candidate assignments.
    pub fn desk(architecture: Architecture) -> Self {
        ModelConfig {
            architecture,
            feature_maps: 32,
            assignments: 4,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.feature_maps == 0 || self.assignments == 0 {
            return Err(ModelError::InvalidConfig(String::from("feature_maps and assignments must be at least 1")));
        }
        if !(0.0..=1.0).contains(&self.grad_scale_alpha) {
            return Err(ModelError::InvalidConfig(String::from("grad_scale_alpha must lie in [0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("parameter table does not match the configuration: {0}")]
    ParameterMismatch(String),
    #[error("state has {got} rows, expected {expected}")]
    StateShape { expected: usize, got: usize },
    #[error("non-finite loss at step {step} for instance {instance}")]
    NonFiniteLoss { step: usize, instance: usize },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Heads {
    QuerySat { q: Mlp, c: Mlp, v: Mlp, o: Mlp },
    NeuroCore { q: Option<Mlp>, c: Mlp, l: Mlp, o: Mlp },
}

/// Recurrent state carried between steps. For QuerySAT `var_state` has one
/// row per variable; the NeuroCore family keeps one row per literal,
/// positive literals first.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub var_state: Matrix,
    pub clause_state: Matrix,
    pub step: usize,
    pub solved: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    heads: Heads,
}

fn build_heads(config: &ModelConfig, store: &mut ParamStore, rng: &mut crate::rng::Rng) -> Heads {
    let d = config.feature_maps;
    let r = config.noise_dims;
    let u = config.assignments;
    match config.architecture {
        Architecture::QuerySat => Heads::QuerySat {
            q: init_mlp(store, "mlp_q", &[d + r, d, d], rng),
            c: init_mlp(store, "mlp_c", &[2 * d, d, d], rng),
            v: init_mlp(store, "mlp_v", &[4 * d, d, d, d], rng),
            o: init_mlp(store, "mlp_o", &[d, d, u], rng),
        },
        arch => {
            let q = arch.has_query().then(|| init_mlp(store, "mlp_q", &[2 * d + r, d, d], rng));
            let clause_in = if arch.has_query() { 3 * d } else { 2 * d + r };
            let literal_in = if arch == Architecture::NeuroCoreQueryG { 4 * d } else { 3 * d };
            Heads::NeuroCore {
                q,
                c: init_mlp(store, "mlp_c", &[clause_in, d, d], rng),
                l: init_mlp(store, "mlp_l", &[literal_in, d, d, d], rng),
                o: init_mlp(store, "mlp_o", &[2 * d, d, u], rng),
            }
        }
    }
}

impl Model {
    /// Fresh model with Glorot-initialized weights drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = stream(seed, &[domain::INIT]);
        let heads = build_heads(&config, &mut params, &mut rng);
        Ok(Model { config, params, heads })
    }

    /// Rebuilds a model around stored parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        let mut template = Model::new(config, 0)?;
        let expected: Vec<(&str, (usize, usize))> = template.params.iter().map(|p| (p.name.as_str(), p.value.shape())).collect();
        let got: Vec<(&str, (usize, usize))> = params.iter().map(|p| (p.name.as_str(), p.value.shape())).collect();
        if expected != got {
            let detail = expected
                .iter()
                .zip(&got)
                .find(|(e, g)| e != g)
                .map(|(e, g)| format!("expected {} {:?}, found {} {:?}", e.0, e.1, g.0, g.1))
                .unwrap_or_else(|| format!("expected {} tensors, found {}", expected.len(), got.len()));
            return Err(ModelError::ParameterMismatch(detail));
        }
        template.params = params;
        Ok(template)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Input width of the literal (or variable) update MLP.
    pub fn state_update_input_width(&self) -> usize {
        match &self.heads {
            Heads::QuerySat { v, .. } => v.input_width(),
            Heads::NeuroCore { l, .. } => l.input_width(),
        }
    }

    /// All-ones initial state for a batch with `n` variables and `m` clauses.
    pub fn initial_state(&self, n: usize, m: usize, instances: usize) -> ModelState {
        let d = self.config.feature_maps;
        let rows = if self.config.architecture.literal_rows() { 2 * n } else { n };
        ModelState {
            var_state: Matrix::filled(rows, d, 1.0),
            clause_state: Matrix::filled(m, d, 1.0),
            step: 0,
            solved: alloc::vec![false; instances],
        }
    }
}

#[cfg(test)]
mod tests;
