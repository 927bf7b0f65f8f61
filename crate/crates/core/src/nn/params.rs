use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use super::tape::{Tape, Var};
use crate::rng::Rng;
use crate::tensor::Matrix;

/// LeakyReLU negative-side slope used by every hidden layer.
pub const LEAKY_SLOPE: f32 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
    pub trainable: bool,
}

/// Named parameters of a model, in creation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: String, value: Matrix) -> ParamId {
        assert!(self.params.iter().all(|p| p.name != name), "duplicate parameter name {name}");
        self.params.push(Parameter { name, value, trainable: true });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    /// Puts every parameter on the tape. With `track` set, trainable
    /// parameters become gradient leaves; otherwise all are constants.
    pub fn bind<'a>(&self, tape: &mut Tape<'a>, track: bool) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if track && p.trainable {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        BoundParams { vars }
    }
}

/// Tape handles of a [`ParamStore`], indexed like the store.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Multi-layer perceptron: LeakyReLU between layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    layers: Vec<(ParamId, ParamId)>,
}

/// Glorot-uniform weight matrix `fan_in × fan_out`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Matrix {
    let bound = glorot_bound(fan_in, fan_out);
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_vec(fan_in, fan_out, data)
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f32 {
    libm::sqrtf(6.0 / (fan_in + fan_out) as f32)
}

/// Registers `<name>.layer<k>.weight` / `.bias` for every consecutive width pair.
pub fn init_mlp(store: &mut ParamStore, name: &str, widths: &[usize], rng: &mut Rng) -> Mlp {
    assert!(widths.len() >= 2, "an MLP needs at least one layer");
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let weight = store.add(format!("{name}.layer{k}.weight"), glorot_uniform(w[0], w[1], rng));
            let bias = store.add(format!("{name}.layer{k}.bias"), Matrix::zeros(1, w[1]));
            (weight, bias)
        })
        .collect();
    Mlp {
        widths: widths.to_vec(),
        layers,
    }
}

impl Mlp {
    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn forward(&self, tape: &mut Tape<'_>, params: &BoundParams, input: Var) -> Var {
        let mut h = input;
        let last = self.layers.len() - 1;
        for (k, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.matmul(h, params.var(w));
            h = tape.add_bias(h, params.var(b));
            if k != last {
                h = tape.leaky_relu(h, LEAKY_SLOPE);
            }
        }
        h
    }
}
