use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamW {
    pub fn with_weight_decay(weight_decay: f64) -> Self {
        Self {
            weight_decay,
            ..Self::default()
        }
    }

    /// One AdamW update over every parameter in `store`.
    ///
    /// Gradients are checked for NaN/Inf before anything is modified, so a
    /// failed step leaves the store untouched.
    pub fn step(&self, store: &mut ParamStore, lr: f64) -> Result<()> {
        for (name, p) in store.iter() {
            if !p.grad.is_finite() {
                return Err(Error::NonFiniteGradient(name.to_string()));
            }
        }
        let (b1, b2) = (self.beta1, self.beta2);
        for (_, p) in store.iter_mut() {
            p.step += 1;
            let t = p.step as i32;
            let bias1 = 1.0 - b1.powi(t);
            let bias2 = 1.0 - b2.powi(t);
            let decay = 1.0 - lr * self.weight_decay;
            let grad = p.grad.data();
            let m = p.first_moment.data_mut();
            for (mi, &g) in m.iter_mut().zip(grad) {
                *mi = b1 * *mi + (1.0 - b1) * g;
            }
            let v = p.second_moment.data_mut();
            for (vi, &g) in v.iter_mut().zip(grad) {
                *vi = b2 * *vi + (1.0 - b2) * g * g;
            }
            let m = p.first_moment.data();
            let v = p.second_moment.data();
            for ((w, &mi), &vi) in p.value.data_mut().iter_mut().zip(m).zip(v) {
                *w *= decay;
                *w -= lr * (mi / bias1) / ((vi / bias2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Cosine-annealed learning rate, from `lr_max` at step 0 down to `lr_min`
/// at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr_min: f64, lr_max: f64) -> f64 {
    if total_steps == 0 || step >= total_steps {
        return lr_min;
    }
    let frac = step as f64 / total_steps as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (PI * frac).cos())
}
