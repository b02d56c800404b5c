use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdamError {
    #[error("non-finite gradient at parameter {0}")]
    NanGrad(usize),
    #[error("gradient at parameter {0} overflows the second moment")]
    Overflow(usize),
    #[error("gradient length {got} does not match {expected} parameters")]
    Shape { got: usize, expected: usize },
}

/// One bias-corrected Adam step that *descends* along `grads`.
///
/// A non-finite gradient, or one whose square overflows, leaves the store
/// untouched.
pub fn adam_step(store: &mut ParamStore, grads: &[f64], cfg: &AdamConfig) -> Result<(), AdamError> {
    if grads.len() != store.values.len() {
        return Err(AdamError::Shape {
            got: grads.len(),
            expected: store.values.len(),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        log::warn!("skipping Adam step: non-finite gradient at {i}");
        return Err(AdamError::NanGrad(i));
    }
    if let Some(i) = grads.iter().position(|g| !(g * g).is_finite()) {
        log::warn!("skipping Adam step: gradient {:.3e} at {i} overflows", grads[i]);
        return Err(AdamError::Overflow(i));
    }
    store.step += 1;
    let t = store.step as f64;
    let bc1 = 1.0 - math::powf(cfg.beta1, t);
    let bc2 = 1.0 - math::powf(cfg.beta2, t);
    for (i, &g) in grads.iter().enumerate() {
        let m = cfg.beta1 * store.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * store.v[i] + (1.0 - cfg.beta2) * g * g;
        store.m[i] = m;
        store.v[i] = v;
        let mhat = m / bc1;
        let vhat = v / bc2;
        store.values[i] -= cfg.lr * mhat / (math::sqrt(vhat) + cfg.eps);
    }
    Ok(())
}
