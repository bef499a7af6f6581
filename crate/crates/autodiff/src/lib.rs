//! Reverse-mode differentiation over dense row-major `f64` matrices.
//!
//! A [`Graph`] records every operation applied during a forward pass.
//! Trainable tensors live in a [`ParamStore`] and enter a graph through
//! [`Graph::param`]; [`Graph::backward`] then returns one gradient per
//! stored parameter (zeros for parameters the loss does not touch).

pub mod checkpoint;
mod error;
pub mod gradcheck;
mod graph;
mod kernels;
mod optim;
mod params;
mod tensor;

pub use error::{EngineError, Result};
pub use graph::{Gradients, Graph, Var, BCE_CLIP};
pub use optim::{nadam_step, Nadam};
pub use params::{init_params, ParamKind, ParamSpec, ParamStore};
pub use tensor::Tensor;
