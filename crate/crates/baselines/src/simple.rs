//! Baselines that need no fitting beyond a single average.

use ktbench_core::Dataset;

use crate::error::{BaselineError, Result};

/// Predicts the global mean correctness of the training data everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanModel {
    pub p: f64,
}

impl MeanModel {
    pub fn fit(train: &Dataset) -> Result<Self> {
        let n = train.attempt_count();
        if n == 0 {
            return Err(BaselineError::EmptyTraining);
        }
        Ok(Self {
            p: train.correct_count() as f64 / n as f64,
        })
    }

    pub fn predict(&self, corrects: &[u8]) -> Vec<f64> {
        vec![self.p; corrects.len().saturating_sub(1)]
    }
}

/// Next-as-Previous: the prediction for attempt `t + 1` is `c_t`.
pub fn nap(corrects: &[u8]) -> Vec<f64> {
    corrects.iter().take(corrects.len().saturating_sub(1)).map(|&c| f64::from(c)).collect()
}

/// Next-as-Previous-N-Mean: the prediction for attempt `t + 1` is the mean
/// of the last `min(t, n)` observed values `c_t, c_{t-1}, ...`.
///
/// # Panics
///
/// If `n` is zero.
pub fn napnm(corrects: &[u8], n: usize) -> Vec<f64> {
    assert!(n >= 1, "window must hold at least one attempt");
    let mut out = Vec::with_capacity(corrects.len().saturating_sub(1));
    let mut window_sum = 0u32;
    for t in 0..corrects.len().saturating_sub(1) {
        window_sum += u32::from(corrects[t]);
        if t >= n {
            window_sum -= u32::from(corrects[t - n]);
        }
        out.push(f64::from(window_sum) / (t + 1).min(n) as f64);
    }
    out
}
