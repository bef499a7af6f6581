//! k-fold cross-validation of one model configuration.

use std::collections::BTreeSet;
use std::time::Instant;

use ktbench_baselines::{BaselineOptions, FittedBaseline};
use ktbench_core::data::{apply_max_attempt, make_folds, split_validation};
use ktbench_core::metrics::MetricReport;
use ktbench_core::rng::{derive_seed, stream};
use ktbench_core::{Dataset, FoldPlan, MaxAttemptPolicy, Metric, StudentSequence};
use ktbench_models::{build_model, HyperParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::kind::ModelKind;
use crate::train::{predict_sequences, train_model, TrainConfig};

/// Everything that identifies one cross-validated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunSpec {
    pub model: ModelKind,
    /// Required for deep models, ignored by baselines.
    pub hyper: Option<HyperParams>,
    pub policy: MaxAttemptPolicy,
    pub folds: usize,
    /// Master seed for fold assignment, validation split and every
    /// training stream.
    pub seed: u64,
    pub train: TrainConfig,
}

impl RunSpec {
    pub fn new(model: ModelKind, seed: u64) -> Self {
        let hyper = match model {
            ModelKind::Deep(arch) => Some(HyperParams::new(arch)),
            ModelKind::Baseline(_) => None,
        };
        Self {
            model,
            hyper,
            policy: MaxAttemptPolicy::None,
            folds: 5,
            seed,
            train: TrainConfig::default(),
        }
    }

    pub fn with_hyper(mut self, hp: HyperParams) -> Self {
        self.hyper = Some(hp);
        self
    }

    /// Canonical configuration key; `-` for baselines.
    pub fn config_key(&self) -> String {
        match (self.model, &self.hyper) {
            (ModelKind::Deep(_), Some(hp)) => hp.key(),
            _ => "-".to_string(),
        }
    }

    fn validate(&self) -> Result<&Option<HyperParams>> {
        if let ModelKind::Deep(arch) = self.model {
            let hp = self
                .hyper
                .as_ref()
                .ok_or_else(|| HarnessError::Config(format!("{arch} needs hyperparameters")))?;
            if hp.architecture != arch {
                return Err(HarnessError::Config(format!(
                    "hyperparameters are for {} but the model is {arch}",
                    hp.architecture
                )));
            }
            hp.validate()?;
            self.train.validate()?;
        }
        Ok(&self.hyper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub report: MetricReport,
    /// Scored targets in the test fold.
    pub targets: usize,
    /// Epochs trained; 0 for baselines.
    pub epochs: usize,
    pub best_validation_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: MetricReport,
    /// Population standard deviation across folds.
    pub std: MetricReport,
}

impl MetricSummary {
    /// Mean and population std over the folds where a metric is defined;
    /// undefined when no fold defines it.
    pub fn over(reports: &[MetricReport]) -> Self {
        let mut out = MetricSummary::default();
        for m in Metric::ALL {
            let values: Vec<f64> = reports.iter().filter_map(|r| r.get(m)).collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            out.mean.set(m, Some(mean));
            out.std.set(m, Some(var.sqrt()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model: ModelKind,
    pub dataset: String,
    pub config: String,
    pub spec: RunSpec,
    pub folds: Vec<FoldResult>,
    pub summary: MetricSummary,
    /// Seconds spent; excluded from persisted result tables.
    #[serde(default)]
    pub wall_clock: f64,
}

impl RunResult {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.summary.mean.get(metric)
    }
}

/// Test, training and validation students of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldSplit {
    pub test: Vec<usize>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

pub fn fold_plan(dataset: &Dataset, folds: usize, seed: u64) -> Result<FoldPlan> {
    Ok(make_folds(dataset, folds, derive_seed(seed, &[stream::FOLDS]))?)
}

pub fn fold_split(plan: &FoldPlan, fold: usize, fraction: f64, seed: u64) -> Result<FoldSplit> {
    let test = plan.fold(fold);
    let rest = plan.complement(fold);
    let (train, validation) = split_validation(&rest, fraction, derive_seed(seed, &[stream::VALIDATION, fold as u64]))?;
    let split = FoldSplit { test, train, validation };
    check_disjoint(&split)?;
    Ok(split)
}

fn check_disjoint(split: &FoldSplit) -> Result<()> {
    let test: BTreeSet<usize> = split.test.iter().copied().collect();
    let train: BTreeSet<usize> = split.train.iter().copied().collect();
    let val: BTreeSet<usize> = split.validation.iter().copied().collect();
    if let Some(s) = test.intersection(&train).chain(test.intersection(&val)).next() {
        return Err(HarnessError::Leakage(format!("test student {s} is also used for fitting")));
    }
    if let Some(s) = train.intersection(&val).next() {
        return Err(HarnessError::Leakage(format!("student {s} is in both training and validation")));
    }
    Ok(())
}

fn prepared(dataset: &Dataset, students: &[usize], policy: MaxAttemptPolicy) -> Result<Dataset> {
    Ok(apply_max_attempt(&dataset.subset(students), policy)?)
}

fn run_fold(spec: &RunSpec, dataset: &Dataset, plan: &FoldPlan, fold: usize) -> Result<FoldResult> {
    let split = fold_split(plan, fold, spec.train.validation_fraction, spec.seed)?;
    let test = prepared(dataset, &split.test, spec.policy)?;
    let (labels, probs, epochs, best_validation_loss) = match spec.model {
        ModelKind::Baseline(kind) => {
            let mut fit_students = split.train.clone();
            fit_students.extend(&split.validation);
            fit_students.sort_unstable();
            let fit = prepared(dataset, &fit_students, spec.policy)?;
            let mut options = BaselineOptions::default();
            options.bkt.seed = derive_seed(spec.seed, &[stream::BKT_RESTARTS, fold as u64]);
            let model = FittedBaseline::fit(kind, &fit, &options)?;
            let (labels, probs) = model.predict_dataset(&test);
            (labels, probs, 0, None)
        }
        ModelKind::Deep(_) => {
            let hp = spec.hyper.expect("validated");
            let train = prepared(dataset, &split.train, spec.policy)?;
            let validation = prepared(dataset, &split.validation, spec.policy)?;
            let positions = train.max_sequence_len().saturating_sub(1);
            let init_seed = derive_seed(spec.seed, &[stream::INIT, hp.seed, fold as u64]);
            let mut model = build_model(&hp, dataset.skill_count, positions, init_seed)?;
            let train_refs: Vec<&StudentSequence> = train.sequences.iter().collect();
            let val_refs: Vec<&StudentSequence> = validation.sequences.iter().collect();
            let train_seed = derive_seed(spec.seed, &[stream::SHUFFLE, hp.seed, fold as u64]);
            let history = train_model(&mut model, &train_refs, &val_refs, &spec.train, train_seed)?;
            let test_refs: Vec<&StudentSequence> = test.sequences.iter().collect();
            let preds = predict_sequences(&model, &test_refs)?;
            (
                preds.labels(),
                preds.probabilities(),
                history.epochs(),
                Some(history.best_validation_loss),
            )
        }
    };
    let expected: usize = test.sequences.iter().map(|s| s.len() - 1).sum();
    if labels.len() != expected {
        return Err(HarnessError::Invariant(format!(
            "{} predictions for {expected} test targets",
            labels.len()
        )));
    }
    Ok(FoldResult {
        fold,
        report: MetricReport::compute(&labels, &probs)?,
        targets: labels.len(),
        epochs,
        best_validation_loss,
    })
}

/// Cross-validates `spec` on `dataset`. Folds run in parallel; their order
/// in the result is always ascending.
pub fn cross_validate(spec: &RunSpec, dataset: &Dataset, dataset_name: &str) -> Result<RunResult> {
    spec.validate()?;
    let start = Instant::now();
    let plan = fold_plan(dataset, spec.folds, spec.seed)?;
    let folds: Vec<FoldResult> = (0..spec.folds)
        .into_par_iter()
        .map(|fold| run_fold(spec, dataset, &plan, fold).map_err(|e| e.in_fold(fold)))
        .collect::<Result<_>>()?;
    let reports: Vec<MetricReport> = folds.iter().map(|f| f.report).collect();
    Ok(RunResult {
        model: spec.model,
        dataset: dataset_name.to_string(),
        config: spec.config_key(),
        spec: spec.clone(),
        summary: MetricSummary::over(&reports),
        folds,
        wall_clock: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_is_population_std() {
        let mk = |auc: Option<f64>| MetricReport {
            auc,
            ..MetricReport::default()
        };
        let s = MetricSummary::over(&[mk(Some(0.6)), mk(Some(0.8)), mk(None)]);
        assert!((s.mean.auc.unwrap() - 0.7).abs() < 1e-12);
        assert!((s.std.auc.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(s.mean.mcc, None);
    }
}
