use std::collections::BTreeMap;

use ktbench_core::KtRng;

use crate::error::{EngineError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Embedding,
}

/// Name, shape and role of one trainable tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, kind: ParamKind) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
            kind,
        }
    }

    pub fn weight(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, rows, cols, ParamKind::Weight)
    }

    pub fn bias(name: impl Into<String>, cols: usize) -> Self {
        Self::new(name, 1, cols, ParamKind::Bias)
    }

    pub fn embedding(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, rows, cols, ParamKind::Embedding)
    }

    pub fn size(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Slot {
    pub value: Tensor,
    pub first: Tensor,
    pub second: Tensor,
}

/// Trainable tensors by name, together with their optimiser moments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    pub(crate) slots: BTreeMap<String, Slot>,
    pub(crate) step: u64,
    pub(crate) momentum_product: f64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            slots: BTreeMap::new(),
            step: 0,
            momentum_product: 1.0,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let (r, c) = (value.rows(), value.cols());
        self.slots.insert(
            name.into(),
            Slot {
                value,
                first: Tensor::zeros(r, c),
                second: Tensor::zeros(r, c),
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).map(|s| &s.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.slots.get_mut(name).map(|s| &mut s.value)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| EngineError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    /// Parameters in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.slots.iter().map(|(k, s)| (k, &s.value))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.slots.keys()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.slots.values().map(|s| s.value.len()).sum()
    }

    /// Optimiser steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Copies of the current values, for restoring the best epoch later.
    pub fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.slots.iter().map(|(k, s)| (k.clone(), s.value.clone())).collect()
    }

    /// Replaces values from a snapshot. Every name must exist with the same
    /// shape; optimiser moments are left as they are.
    pub fn restore(&mut self, snapshot: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, value) in snapshot {
            let slot = self
                .slots
                .get_mut(name)
                .ok_or_else(|| EngineError::UnknownParam(name.clone()))?;
            if !slot.value.same_shape(value) {
                return Err(EngineError::shape("restore", slot.value.shape(), value.shape()));
            }
            slot.value = value.clone();
        }
        Ok(())
    }
}

/// Glorot-uniform limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// Builds a store from specs. Weights and embeddings are Glorot-uniform,
/// biases start at zero. Specs are initialised in name order from one
/// generator, so the result does not depend on the order of `specs`.
pub fn init_params(specs: &[ParamSpec], rng: &mut KtRng) -> Result<ParamStore> {
    let mut sorted: Vec<&ParamSpec> = specs.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    if let Some(w) = sorted.windows(2).find(|w| w[0].name == w[1].name) {
        return Err(EngineError::Contract(format!("duplicate parameter `{}`", w[0].name)));
    }
    let mut store = ParamStore::new();
    for spec in sorted {
        if spec.rows == 0 || spec.cols == 0 {
            return Err(EngineError::Contract(format!("parameter `{}` has an empty shape", spec.name)));
        }
        let value = match spec.kind {
            ParamKind::Bias => Tensor::zeros(spec.rows, spec.cols),
            ParamKind::Weight | ParamKind::Embedding => {
                let limit = glorot_limit(spec.rows, spec.cols);
                let data = (0..spec.size()).map(|_| rng.uniform_range(-limit, limit)).collect();
                Tensor::matrix(spec.rows, spec.cols, data)?
            }
        };
        store.insert(spec.name.clone(), value);
    }
    Ok(store)
}
