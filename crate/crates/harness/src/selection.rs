//! How much an evaluation metric loses when the model configuration is
//! picked by a different metric.

use std::collections::BTreeMap;

use ktbench_core::Metric;
use serde::{Deserialize, Serialize};

use crate::cv::RunResult;
use crate::error::{HarnessError, Result};
use crate::grid::select_best;
use crate::kind::ModelKind;

/// `mean[a][b]` and `max[a][b]` aggregate, over (model, dataset) groups,
/// the loss in metric `b` from selecting by metric `a`. `None` marks a cell
/// without any defined group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    pub metrics: Vec<Metric>,
    pub mean: Vec<Vec<Option<f64>>>,
    pub max: Vec<Vec<Option<f64>>>,
    /// Groups contributing to each cell.
    pub counts: Vec<Vec<usize>>,
    pub groups: usize,
    pub warnings: Vec<String>,
}

impl LossMatrix {
    pub fn get(&self, select: Metric, eval: Metric) -> Option<(f64, f64)> {
        let a = self.metrics.iter().position(|&m| m == select)?;
        let b = self.metrics.iter().position(|&m| m == eval)?;
        Some((self.mean[a][b]?, self.max[a][b]?))
    }

    fn check(&self) -> Result<()> {
        for (a, row) in self.max.iter().enumerate() {
            for (b, cell) in row.iter().enumerate() {
                match cell {
                    Some(v) if *v < 0.0 => {
                        return Err(HarnessError::Invariant(format!(
                            "negative selection loss {v} for ({}, {})",
                            self.metrics[a], self.metrics[b]
                        )))
                    }
                    Some(v) if a == b && *v != 0.0 => {
                        return Err(HarnessError::Invariant(format!(
                            "diagonal selection loss {v} for {}",
                            self.metrics[a]
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Loss in `eval` when selecting by `select` within one group, or `None`
/// when either choice is undefined.
pub fn group_loss(results: &[RunResult], select: Metric, eval: Metric) -> Option<f64> {
    let chosen = select_best(results, select)?.mean(eval)?;
    let best = select_best(results, eval)?.mean(eval)?;
    let loss = if eval.higher_is_better() { best - chosen } else { chosen - best };
    Some(loss)
}

/// Builds the loss matrix over every (model, dataset) group in `results`.
/// Every group needs at least two configurations.
pub fn selection_loss(results: &[RunResult], metrics: &[Metric]) -> Result<LossMatrix> {
    if metrics.is_empty() {
        return Err(HarnessError::Config("no metrics to analyse".into()));
    }
    let mut groups: BTreeMap<(ModelKind, String), Vec<RunResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.model, r.dataset.clone())).or_default().push(r.clone());
    }
    if groups.is_empty() {
        return Err(HarnessError::Config("no results to analyse".into()));
    }
    for ((model, dataset), members) in &groups {
        if members.len() < 2 {
            return Err(HarnessError::Config(format!(
                "{model} on {dataset} has {} configuration; selection loss needs at least two",
                members.len()
            )));
        }
    }
    let n = metrics.len();
    let mut sums = vec![vec![0.0; n]; n];
    let mut max = vec![vec![None::<f64>; n]; n];
    let mut counts = vec![vec![0usize; n]; n];
    let mut warnings = Vec::new();
    for ((model, dataset), members) in &groups {
        for (a, &select) in metrics.iter().enumerate() {
            for (b, &eval) in metrics.iter().enumerate() {
                match group_loss(members, select, eval) {
                    Some(loss) => {
                        sums[a][b] += loss;
                        counts[a][b] += 1;
                        max[a][b] = Some(max[a][b].map_or(loss, |m: f64| m.max(loss)));
                    }
                    None => warnings.push(format!(
                        "{model} on {dataset}: ({select}, {eval}) skipped, metric undefined"
                    )),
                }
            }
        }
    }
    let mean = sums
        .iter()
        .zip(&counts)
        .map(|(row, c)| row.iter().zip(c).map(|(&s, &k)| (k > 0).then(|| s / k as f64)).collect())
        .collect();
    let matrix = LossMatrix {
        metrics: metrics.to_vec(),
        mean,
        max,
        counts,
        groups: groups.len(),
        warnings,
    };
    matrix.check()?;
    Ok(matrix)
}
