//! Experiment harness: training with early stopping, k-fold
//! cross-validation, grid search, selection-loss analysis and reports.

mod cv;
mod error;
pub mod grid;
mod kind;
pub mod report;
pub mod selection;
pub mod store;
pub mod train;

pub use cv::{cross_validate, fold_plan, fold_split, FoldResult, FoldSplit, MetricSummary, RunResult, RunSpec};
pub use error::{HarnessError, Result};
pub use grid::{grid_search, select_best, GridDomain, GridOutcome};
pub use kind::ModelKind;
pub use report::aggregate_report;
pub use selection::{selection_loss, LossMatrix};
pub use train::{train_model, EarlyStopping, TrainConfig, TrainHistory};
