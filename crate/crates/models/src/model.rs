use std::path::Path;

use ktbench_autodiff::gradcheck::{check_gradients, GradCheckConfig, GradCheckReport};
use ktbench_autodiff::{checkpoint, init_params, EngineError, Graph, Nadam, ParamSpec, ParamStore, Var, BCE_CLIP};
use ktbench_core::KtRng;
use serde::{Deserialize, Serialize};

use crate::batch::{Batch, Prediction, PredictionBatch};
use crate::error::{ModelError, Result};
use crate::hparams::{Architecture, HyperParams};
use crate::network::{param_specs, Ctx};

/// A configured network together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub hp: HyperParams,
    pub skill_count: usize,
    /// SAKT position-table size; 0 for the other architectures.
    pub positions: usize,
    pub params: ParamStore,
}

/// Header stored with a model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub architecture: Architecture,
    pub hyperparams: HyperParams,
    pub skill_count: usize,
    pub positions: usize,
    pub init_seed: u64,
}

/// Allocates and initialises the parameters for `hp` over `skills` skills.
/// `positions` sizes the SAKT position table (the longest training step
/// count) and is ignored elsewhere.
pub fn build_model(hp: &HyperParams, skills: usize, positions: usize, init_seed: u64) -> Result<Model> {
    hp.validate()?;
    if skills == 0 {
        return Err(ModelError::Config("skill count must be positive".into()));
    }
    let positions = if hp.architecture == Architecture::Sakt {
        if positions == 0 {
            return Err(ModelError::Config("SAKT needs at least one position".into()));
        }
        positions
    } else {
        0
    };
    let specs = param_specs(hp, skills, positions);
    let params = init_params(&specs, &mut KtRng::new(init_seed))?;
    Ok(Model {
        hp: *hp,
        skill_count: skills,
        positions,
        params,
    })
}

impl Model {
    pub fn specs(&self) -> Vec<ParamSpec> {
        param_specs(&self.hp, self.skill_count, self.positions)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.parameter_count()
    }

    /// Records the forward pass into `g` using `store` (normally
    /// `self.params`) and returns the `B x steps` probability matrix.
    /// Dropout is active only when `rng` is given.
    pub fn forward_with(
        &self,
        store: &ParamStore,
        g: &mut Graph,
        batch: &Batch,
        rng: Option<&mut KtRng>,
    ) -> Result<Var> {
        let mut ctx = Ctx {
            g,
            store,
            hp: &self.hp,
            skills: self.skill_count,
            rng,
        };
        ctx.forward(batch)
    }

    pub fn forward(&self, g: &mut Graph, batch: &Batch, rng: Option<&mut KtRng>) -> Result<Var> {
        self.forward_with(&self.params, g, batch, rng)
    }

    /// Mean masked cross-entropy of the batch.
    pub fn loss_with(
        &self,
        store: &ParamStore,
        g: &mut Graph,
        batch: &Batch,
        rng: Option<&mut KtRng>,
    ) -> Result<Var> {
        let probs = self.forward_with(store, g, batch, rng)?;
        Ok(g.bce_masked(probs, &batch.labels, &batch.mask)?)
    }

    /// One optimiser step on `batch` with dropout drawn from `rng`.
    /// Returns the batch loss before the update.
    pub fn train_step(&mut self, batch: &Batch, rng: &mut KtRng) -> Result<f64> {
        let mut g = Graph::new();
        let loss = self.loss_with(&self.params, &mut g, batch, Some(rng))?;
        let value = g.value(loss).item()?;
        let grads = g.backward(loss, &self.params)?;
        Nadam::new(self.hp.learning_rate).step(&mut self.params, &grads)?;
        Ok(value)
    }

    /// Predictions for every real target of `batch`, without dropout.
    /// Probabilities are clipped into `[1e-7, 1 - 1e-7]`.
    pub fn predict(&self, batch: &Batch) -> Result<PredictionBatch> {
        let mut g = Graph::new();
        let probs = self.forward(&mut g, batch, None)?;
        let p = g.value(probs);
        let mut entries = Vec::with_capacity(batch.target_count());
        for b in 0..batch.size() {
            for j in 0..batch.steps {
                if batch.mask.get(b, j) == 0.0 {
                    continue;
                }
                entries.push(Prediction {
                    student: batch.students[b],
                    position: batch.offset + j + 1,
                    skill: batch.next_skills[b * batch.steps + j],
                    label: batch.labels.get(b, j) as u8,
                    probability: p.get(b, j).clamp(BCE_CLIP, 1.0 - BCE_CLIP),
                });
            }
        }
        Ok(PredictionBatch { entries })
    }

    /// Finite-difference check of the batch loss gradient. With a
    /// `dropout_seed` every evaluation reuses the same dropout masks.
    pub fn gradient_check(
        &self,
        batch: &Batch,
        config: GradCheckConfig,
        dropout_seed: Option<u64>,
    ) -> Result<GradCheckReport> {
        let report = check_gradients(
            &self.params,
            |g, store| {
                let mut rng = dropout_seed.map(KtRng::new);
                self.loss_with(store, g, batch, rng.as_mut()).map_err(|e| match e {
                    ModelError::Engine(inner) => inner,
                    other => EngineError::Contract(other.to_string()),
                })
            },
            config,
        )?;
        Ok(report)
    }

    pub fn manifest(&self, init_seed: u64) -> ModelManifest {
        ModelManifest {
            architecture: self.hp.architecture,
            hyperparams: self.hp,
            skill_count: self.skill_count,
            positions: self.positions,
            init_seed,
        }
    }

    pub fn save(&self, path: &Path, init_seed: u64) -> Result<()> {
        let header = serde_json::to_string(&self.manifest(init_seed)).map_err(|e| ModelError::Manifest(e.to_string()))?;
        checkpoint::save(&self.params, &header, path)?;
        Ok(())
    }

    /// Loads a checkpoint and checks its tensors against the manifest.
    pub fn load(path: &Path) -> Result<(Model, ModelManifest)> {
        let (header, params) = checkpoint::load(path)?;
        let manifest: ModelManifest = serde_json::from_str(&header).map_err(|e| ModelError::Manifest(e.to_string()))?;
        let model = Model {
            hp: manifest.hyperparams,
            skill_count: manifest.skill_count,
            positions: manifest.positions,
            params,
        };
        for spec in model.specs() {
            let t = model
                .params
                .get(&spec.name)
                .ok_or_else(|| ModelError::Manifest(format!("missing tensor `{}`", spec.name)))?;
            if t.rows() != spec.rows || t.cols() != spec.cols {
                return Err(ModelError::Manifest(format!("tensor `{}` has the wrong shape", spec.name)));
            }
        }
        if model.params.len() != model.specs().len() {
            return Err(ModelError::Manifest("unexpected extra tensors".into()));
        }
        Ok((model, manifest))
    }
}
