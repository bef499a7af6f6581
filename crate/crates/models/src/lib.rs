//! The deep knowledge-tracing models.
//!
//! All six architectures share the batch layout of [`batch`]: step `j`
//! consumes attempt `j` and predicts attempt `j + 1`. Each model can take
//! one-hot or embedded inputs and end in an output-per-skill or a
//! skills-to-scalar head.

pub mod batch;
pub mod cells;
mod error;
mod hparams;
mod model;
mod network;

pub use batch::{make_batches, Batch, Prediction, PredictionBatch};
pub use error::{ModelError, Result};
pub use hparams::{Architecture, HyperParams, InputVariant, ModelFlags, OutputVariant};
pub use model::{build_model, Model, ModelManifest};
pub use network::param_specs;
