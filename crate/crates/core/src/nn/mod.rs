//! Reverse-mode differentiation and the layers built on it.

mod params;
mod tape;

pub use params::{glorot_bound, glorot_uniform, init_mlp, BoundParams, Mlp, ParamId, ParamStore, Parameter, LEAKY_SLOPE};
pub use tape::{pairnorm_forward, Gradients, Tape, TapeError, Var, PAIRNORM_EPSILON};
