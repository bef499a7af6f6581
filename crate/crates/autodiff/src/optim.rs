//! Nadam with the Keras momentum schedule.
//!
//! At step `t` (starting at 1), with `mu_t = beta1 * (1 - 0.5 * 0.96^(decay * t))`:
//!
//! ```text
//! prod_t   = prod_{t-1} * mu_t
//! g_hat    = g / (1 - prod_t)
//! m        = beta1 * m + (1 - beta1) * g
//! v        = beta2 * v + (1 - beta2) * g^2
//! m_hat    = m / (1 - prod_t * mu_{t+1})
//! v_hat    = v / (1 - beta2^t)
//! m_bar    = (1 - mu_t) * g_hat + mu_{t+1} * m_hat
//! theta   -= lr * m_bar / (sqrt(v_hat) + eps)
//! ```

use crate::error::{EngineError, Result};
use crate::graph::Gradients;
use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nadam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub schedule_decay: f64,
}

impl Nadam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            schedule_decay: 0.004,
        }
    }

    fn momentum(&self, t: u64) -> f64 {
        self.beta1 * (1.0 - 0.5 * 0.96_f64.powf(self.schedule_decay * t as f64))
    }

    /// Applies one update to every parameter in `store`. A non-finite
    /// gradient aborts the step before anything is changed.
    pub fn step(&self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for name in store.slots.keys() {
            let g = grads
                .get(name)
                .ok_or_else(|| EngineError::Contract(format!("no gradient for `{name}`")))?;
            if !g.is_finite() {
                return Err(EngineError::Divergence { param: name.clone() });
            }
            let value = &store.slots[name].value;
            if !g.same_shape(value) {
                return Err(EngineError::shape("nadam", value.shape(), g.shape()));
            }
        }

        let t = store.step + 1;
        let mu_t = self.momentum(t);
        let mu_next = self.momentum(t + 1);
        let prod = store.momentum_product * mu_t;
        let prod_next = prod * mu_next;
        let bias2 = 1.0 - self.beta2.powf(t as f64);

        for (name, slot) in store.slots.iter_mut() {
            let g = grads.get(name).expect("checked above");
            let theta = slot.value.data_mut();
            let m = slot.first.data_mut();
            let v = slot.second.data_mut();
            for i in 0..theta.len() {
                let gi = g.data()[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let g_hat = gi / (1.0 - prod);
                let m_hat = m[i] / (1.0 - prod_next);
                let v_hat = v[i] / bias2;
                let m_bar = (1.0 - mu_t) * g_hat + mu_next * m_hat;
                theta[i] -= self.learning_rate * m_bar / (v_hat.sqrt() + self.epsilon);
            }
        }
        store.step = t;
        store.momentum_product = prod;
        Ok(())
    }
}

/// One Nadam step with default constants.
pub fn nadam_step(store: &mut ParamStore, grads: &Gradients, learning_rate: f64) -> Result<()> {
    Nadam::new(learning_rate).step(store, grads)
}
