//! Mini-batch training with validation-monitored early stopping.

use ktbench_autodiff::EngineError;
use ktbench_core::metrics::log_loss;
use ktbench_core::{KtRng, StudentSequence};
use ktbench_models::{make_batches, Model, ModelError, PredictionBatch};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            patience: 10,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(HarnessError::Config("max epochs must be positive".into()));
        }
        if self.patience == 0 || self.patience >= self.max_epochs {
            return Err(HarnessError::Config(format!(
                "patience {} must lie in 1..{}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(HarnessError::Config(format!(
                "validation fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// Patience counter over a monitored loss. Only a strictly lower value
/// counts as an improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    waited: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Improved,
    Waiting,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            waited: 0,
        }
    }

    /// Records the loss after `epoch` (counted from 1).
    pub fn observe(&mut self, epoch: usize, loss: f64) -> Progress {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.waited = 0;
            Progress::Improved
        } else {
            self.waited += 1;
            if self.waited >= self.patience {
                Progress::Stop
            } else {
                Progress::Waiting
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training batch loss per epoch.
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.validation_loss.len()
    }
}

/// Predictions for every target of `seqs`, in sequence order.
pub fn predict_sequences(model: &Model, seqs: &[&StudentSequence]) -> Result<PredictionBatch> {
    let mut out = PredictionBatch::default();
    for batch in make_batches(seqs, model.hp.batch_size, model.skill_count)? {
        out.extend(model.predict(&batch)?);
    }
    Ok(out)
}

pub fn validation_loss(model: &Model, seqs: &[&StudentSequence]) -> Result<f64> {
    let preds = predict_sequences(model, seqs)?;
    Ok(log_loss(&preds.labels(), &preds.probabilities())?)
}

/// Trains `model` in place and leaves it holding the parameters of the
/// epoch with the lowest validation log loss. Batches are reshuffled every
/// epoch from `seed`, which also drives dropout.
pub fn train_model(
    model: &mut Model,
    train: &[&StudentSequence],
    validation: &[&StudentSequence],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(HarnessError::Config("training and validation sets must be non-empty".into()));
    }
    let mut order: Vec<&StudentSequence> = train.to_vec();
    let mut shuffle = KtRng::derived(seed, &[ktbench_core::rng::stream::SHUFFLE]);
    let mut dropout = KtRng::derived(seed, &[ktbench_core::rng::stream::DROPOUT]);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = model.params.snapshot();
    let mut history = TrainHistory {
        train_loss: Vec::new(),
        validation_loss: Vec::new(),
        best_epoch: 0,
        best_validation_loss: f64::INFINITY,
    };
    for epoch in 1..=cfg.max_epochs {
        shuffle.shuffle(&mut order);
        let batches = make_batches(&order, model.hp.batch_size, model.skill_count)?;
        let mut total = 0.0;
        for (index, batch) in batches.iter().enumerate() {
            let diverged = |message: String| HarnessError::Divergence {
                epoch,
                batch: index,
                message,
            };
            let loss = match model.train_step(batch, &mut dropout) {
                Ok(loss) => loss,
                Err(ModelError::Engine(EngineError::Divergence { param })) => {
                    return Err(diverged(format!("non-finite gradient for `{param}`")))
                }
                Err(ModelError::Engine(EngineError::Contract(m))) if m.contains("not finite") => {
                    return Err(diverged(m))
                }
                Err(e) => return Err(e.into()),
            };
            if !loss.is_finite() {
                return Err(diverged(format!("training loss {loss}")));
            }
            total += loss;
        }
        history.train_loss.push(total / batches.len() as f64);
        let val = validation_loss(model, validation)?;
        history.validation_loss.push(val);
        match stopper.observe(epoch, val) {
            Progress::Improved => best_params = model.params.snapshot(),
            Progress::Waiting => {}
            Progress::Stop => break,
        }
    }
    model
        .params
        .restore(&best_params)
        .map_err(|e| HarnessError::Invariant(format!("restoring best parameters: {e}")))?;
    history.best_epoch = stopper.best_epoch();
    history.best_validation_loss = stopper.best();
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn always_improving_never_stops() {
        let mut s = EarlyStopping::new(10);
        for epoch in 1..=100 {
            assert_eq!(s.observe(epoch, 1.0 / epoch as f64), Progress::Improved);
        }
        assert_eq!(s.best_epoch(), 100);
    }

    #[test]
    fn flat_loss_stops_at_epoch_eleven() {
        let mut s = EarlyStopping::new(10);
        let stopped = (1..=100).find(|&e| s.observe(e, 0.5) == Progress::Stop);
        assert_eq!(stopped, Some(11));
        assert_eq!(s.best_epoch(), 1);
    }

    #[test]
    fn equal_loss_is_not_an_improvement() {
        let mut s = EarlyStopping::new(2);
        s.observe(1, 0.4);
        assert_eq!(s.observe(2, 0.4), Progress::Waiting);
        assert_eq!(s.observe(3, 0.39), Progress::Improved);
        assert_eq!(s.best_epoch(), 3);
    }

    #[test]
    fn config_validation() {
        TrainConfig::default().validate().unwrap();
        let cfg = TrainConfig {
            patience: 100,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
