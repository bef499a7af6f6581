//! Hyperparameter grid enumeration and search.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use ktbench_core::{Dataset, Metric};
use ktbench_models::{Architecture, HyperParams, InputVariant, OutputVariant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{cross_validate, RunResult, RunSpec};
use crate::error::{HarnessError, Result};
use crate::kind::ModelKind;

/// Values searched for each hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GridDomain {
    pub recurrent_size: Vec<usize>,
    pub key_embed_size: Vec<usize>,
    pub value_embed_size: Vec<usize>,
    pub summary_size: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub dropout_rate: Vec<f64>,
    pub attention_heads: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub seed: Vec<u64>,
}

impl Default for GridDomain {
    fn default() -> Self {
        Self {
            recurrent_size: vec![50, 100],
            key_embed_size: vec![20, 50],
            value_embed_size: vec![20, 50],
            summary_size: vec![50, 100],
            learning_rate: vec![0.01, 0.001],
            dropout_rate: vec![0.2],
            attention_heads: vec![1, 5],
            batch_size: vec![32],
            seed: vec![13, 42],
        }
    }
}

impl GridDomain {
    /// Every applicable combination for `arch`, in a fixed order and without
    /// duplicates. Sizes that a variant ignores are not enumerated.
    pub fn enumerate(&self, arch: Architecture) -> Vec<HyperParams> {
        let base = HyperParams::new(arch);
        let mut inputs: Vec<(InputVariant, usize, usize)> = vec![(InputVariant::OneHot, base.key_embed_size, base.value_embed_size)];
        let keys: &[usize] = if arch.uses_keys() { &self.key_embed_size } else { &[0] };
        for &k in keys {
            for &v in &self.value_embed_size {
                let k = if arch.uses_keys() { k } else { base.key_embed_size };
                inputs.push((InputVariant::Embedding, k, v));
            }
        }
        let mut outputs: Vec<(OutputVariant, usize)> = vec![(OutputVariant::OutputPerSkill, base.summary_size)];
        outputs.extend(self.summary_size.iter().map(|&s| (OutputVariant::SkillsToScalar, s)));
        let heads: &[usize] = if arch == Architecture::Sakt { &self.attention_heads } else { &[1] };

        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for &size in &self.recurrent_size {
            for &(input, k, v) in &inputs {
                for &(output, summary) in &outputs {
                    for &lr in &self.learning_rate {
                        for &dropout in &self.dropout_rate {
                            for &h in heads {
                                for &batch in &self.batch_size {
                                    for &seed in &self.seed {
                                        let hp = HyperParams {
                                            recurrent_size: size,
                                            key_embed_size: k,
                                            value_embed_size: v,
                                            summary_size: summary,
                                            input,
                                            output,
                                            learning_rate: lr,
                                            dropout_rate: dropout,
                                            attention_heads: h,
                                            batch_size: batch,
                                            seed,
                                            ..base
                                        };
                                        if hp.validate().is_ok() && seen.insert(hp.key()) {
                                            out.push(hp);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Orders results by `metric` (best first), then by lower mean log loss,
/// then by configuration key. Results with the metric undefined sort last.
pub fn compare_for_selection(metric: Metric, a: &RunResult, b: &RunResult) -> Ordering {
    let by_metric = match (a.mean(metric), b.mean(metric)) {
        (Some(x), Some(y)) => {
            if metric.better(x, y) {
                Ordering::Less
            } else if metric.better(y, x) {
                Ordering::Greater
            } else {
                Ordering::Equal
            }
        }
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    let by_loss = || match (a.mean(Metric::LogLoss), b.mean(Metric::LogLoss)) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    by_metric.then_with(by_loss).then_with(|| a.config.cmp(&b.config))
}

/// The best result under `metric`, ignoring results where it is undefined.
pub fn select_best(results: &[RunResult], metric: Metric) -> Option<&RunResult> {
    results
        .iter()
        .filter(|r| r.mean(metric).is_some())
        .min_by(|a, b| compare_for_selection(metric, a, b))
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best: HyperParams,
    /// One result per grid point, sorted by configuration key.
    pub results: Vec<RunResult>,
}

/// Cross-validates every point and picks the best by `select`. `template`
/// supplies the policy, fold count, seed and training settings.
pub fn grid_search(
    template: &RunSpec,
    points: &[HyperParams],
    dataset: &Dataset,
    dataset_name: &str,
    select: Metric,
) -> Result<GridOutcome> {
    if points.is_empty() {
        return Err(HarnessError::Config("the hyperparameter grid is empty".into()));
    }
    let mut results: Vec<RunResult> = points
        .par_iter()
        .map(|hp| {
            let spec = RunSpec {
                model: ModelKind::Deep(hp.architecture),
                hyper: Some(*hp),
                ..template.clone()
            };
            cross_validate(&spec, dataset, dataset_name)
        })
        .collect::<Result<_>>()?;
    results.sort_by(|a, b| a.config.cmp(&b.config));
    let best = select_best(&results, select)
        .and_then(|r| r.spec.hyper)
        .ok_or_else(|| HarnessError::Config(format!("{select} is undefined for every grid point")))?;
    Ok(GridOutcome { best, results })
}
