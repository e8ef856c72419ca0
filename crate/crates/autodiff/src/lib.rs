//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records operations as they are applied; [`Graph::backward`]
//! walks the record once in reverse and sums parameter gradients into their
//! [`ParamSet`]. Layers cover what a U-Net image translator and a dilated
//! causal waveform model need.

mod error;
pub mod gradcheck;
mod graph;
mod kernels;
mod optim;
mod params;
mod tensor;

pub use error::{AutodiffError, Result};
pub use graph::{Graph, InputGrads, Var};
pub use optim::{adam_step, AdamState};
pub use params::{load_params, parse_params, round_to_storage, save_params, ParamSet};
pub use tensor::Tensor;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    graph::sigmoid(x)
}
