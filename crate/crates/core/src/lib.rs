//! Query-based neural SAT solving.
//!
//! This crate holds everything that is pure computation: CNF formulas and
//! factor graphs, the differentiable clause losses, a small reverse-mode
//! differentiation engine, the recurrent solver models, AdaBelief, the exact
//! rational clause codec, classical baselines and instance generators.
//!
//! It is `no_std` and only needs `alloc`. File formats, timing, and the
//! command line live in the companion `querysat` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cnf;
pub mod generators;
pub mod graph;
pub mod loss;
pub mod model;
pub mod nn;
pub mod optim;
pub mod probe;
pub mod rng;
pub mod solvers;
pub mod tensor;
pub mod theorem;
pub mod train;

pub use cnf::{check_assignment, Assignment, CnfError, CnfFormula, Literal};
pub use graph::{batch_formulas, Batch, FactorGraph, SparseBinary};
