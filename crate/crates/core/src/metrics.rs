//! Evaluation metrics over pooled (label, probability) pairs.
//!
//! Threshold metrics treat label 1 as positive and a prediction as positive
//! when its probability is at least 0.5. A metric whose formula divides by
//! zero is `None` ("undefined"); it is never reported as 0.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

pub const DECISION_THRESHOLD: f64 = 0.5;
pub const LOG_LOSS_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Auc,
    Precision,
    Recall,
    F1,
    Mcc,
    Rmse,
    LogLoss,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Accuracy,
        Metric::Auc,
        Metric::Precision,
        Metric::Recall,
        Metric::F1,
        Metric::Mcc,
        Metric::Rmse,
        Metric::LogLoss,
    ];

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Rmse | Metric::LogLoss)
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "acc",
            Metric::Auc => "auc",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
            Metric::Mcc => "mcc",
            Metric::Rmse => "rmse",
            Metric::LogLoss => "logloss",
        }
    }

    /// True when `a` is strictly better than `b` under this metric.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .or(match lower.as_str() {
                "accuracy" => Some(Metric::Accuracy),
                "log_loss" | "log-loss" => Some(Metric::LogLoss),
                _ => None,
            })
            .ok_or_else(|| {
                let valid: Vec<&str> = Metric::ALL.iter().map(|m| m.name()).collect();
                DataError::Config(format!("unknown metric {s:?}; valid: {}", valid.join(", ")))
            })
    }
}

/// Scores for every metric; `None` marks an undefined value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
    pub rmse: Option<f64>,
    pub log_loss: Option<f64>,
}

impl MetricReport {
    pub fn compute(labels: &[u8], probs: &[f64]) -> Result<Self, DataError> {
        let counts = confusion(labels, probs)?;
        let t = threshold_metrics(&counts);
        Ok(Self {
            accuracy: t.accuracy,
            auc: auc(labels, probs)?,
            precision: t.precision,
            recall: t.recall,
            f1: t.f1,
            mcc: t.mcc,
            rmse: Some(rmse(labels, probs)?),
            log_loss: Some(log_loss(labels, probs)?),
        })
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Auc => self.auc,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
            Metric::Mcc => self.mcc,
            Metric::Rmse => self.rmse,
            Metric::LogLoss => self.log_loss,
        }
    }

    pub fn set(&mut self, metric: Metric, value: Option<f64>) {
        let slot = match metric {
            Metric::Accuracy => &mut self.accuracy,
            Metric::Auc => &mut self.auc,
            Metric::Precision => &mut self.precision,
            Metric::Recall => &mut self.recall,
            Metric::F1 => &mut self.f1,
            Metric::Mcc => &mut self.mcc,
            Metric::Rmse => &mut self.rmse,
            Metric::LogLoss => &mut self.log_loss,
        };
        *slot = value;
    }
}

/// Threshold-based metrics derived from confusion counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
}

fn check_pairs(labels: &[u8], probs: &[f64]) -> Result<(), DataError> {
    if labels.len() != probs.len() {
        return Err(DataError::Contract(format!(
            "{} labels but {} predictions",
            labels.len(),
            probs.len()
        )));
    }
    if labels.is_empty() {
        return Err(DataError::Contract("metrics need at least one prediction".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(DataError::Contract(format!("label {l} is not binary")));
    }
    Ok(())
}

pub fn confusion(labels: &[u8], probs: &[f64]) -> Result<ConfusionCounts, DataError> {
    check_pairs(labels, probs)?;
    let mut c = ConfusionCounts::default();
    for (&l, &p) in labels.iter().zip(probs) {
        match (l == 1, p >= DECISION_THRESHOLD) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

pub fn threshold_metrics(c: &ConfusionCounts) -> ThresholdMetrics {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    let mcc_den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    ThresholdMetrics {
        accuracy: ratio(tp + tn, tp + fp + tn + fn_),
        precision,
        recall,
        f1,
        mcc: ratio(tp * tn - fp * fn_, mcc_den.sqrt()),
    }
}

/// Rank-based ROC AUC with tied scores sharing their average rank, which
/// equals the probability that a random positive outranks a random
/// negative (ties counted one half). `None` for single-class labels.
pub fn auc(labels: &[u8], probs: &[f64]) -> Result<Option<f64>, DataError> {
    check_pairs(labels, probs)?;
    if probs.iter().any(|p| p.is_nan()) {
        return Err(DataError::Contract("NaN prediction".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));

    // Twice the rank sum keeps tied average ranks integral.
    let mut twice_rank_sum_pos: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share the average (i + j + 2) / 2.
        let twice_avg = (i + j + 2) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        twice_rank_sum_pos += twice_avg * pos_in_group;
        i = j + 1;
    }
    let p = positives as u128;
    let twice_u = twice_rank_sum_pos - p * (p + 1);
    Ok(Some(twice_u as f64 / (2.0 * positives as f64 * negatives as f64)))
}

pub fn rmse(labels: &[u8], probs: &[f64]) -> Result<f64, DataError> {
    check_pairs(labels, probs)?;
    let sse: f64 = labels
        .iter()
        .zip(probs)
        .map(|(&l, &p)| (l as f64 - p).powi(2))
        .sum();
    Ok((sse / labels.len() as f64).sqrt())
}

/// Mean binary cross-entropy with probabilities clipped to
/// `[1e-7, 1 - 1e-7]`.
pub fn log_loss(labels: &[u8], probs: &[f64]) -> Result<f64, DataError> {
    check_pairs(labels, probs)?;
    let total: f64 = labels
        .iter()
        .zip(probs)
        .map(|(&l, &p)| {
            let p = p.clamp(LOG_LOSS_CLIP, 1.0 - LOG_LOSS_CLIP);
            if l == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / labels.len() as f64)
}
