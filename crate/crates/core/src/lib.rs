//! Shared building blocks for the knowledge-tracing benchmark: attempt
//! datasets and their preprocessing, the seeded random source used by every
//! crate in the workspace, and the evaluation metrics.

pub mod data;
pub mod error;
pub mod metrics;
pub mod rng;

pub use data::{
    Dataset, FoldPlan, Interaction, MaxAttemptPolicy, ParseReport, StudentSequence,
    SyntheticConfig,
};
pub use error::{DataError, Result};
pub use metrics::{ConfusionCounts, Metric, MetricReport};
pub use rng::KtRng;
