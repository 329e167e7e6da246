//! Adam optimizer with L2 weight decay folded into the gradient.

use std::collections::BTreeMap;

use super::params::ParamSet;
use super::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam state; moment estimates are keyed by parameter name and created
/// lazily on first update.
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every trainable parameter that has a gradient.
    /// Frozen parameters and parameters absent from `grads` are untouched
    /// (no decay without a gradient).
    pub fn step(&mut self, params: &mut ParamSet, grads: &BTreeMap<String, Tensor>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        for (name, grad) in grads {
            let Some(p) = params.get_mut(name) else { continue };
            if !p.trainable {
                continue;
            }
            debug_assert_eq!(p.value.shape(), grad.shape());
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.value.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.value.raw_dim()));
            let wd = self.cfg.weight_decay;
            let eps = self.cfg.eps;
            ndarray::Zip::from(&mut p.value)
                .and(m)
                .and(v)
                .and(grad)
                .for_each(|pv, mv, vv, &gv| {
                    let g = gv + wd * *pv;
                    *mv = b1 * *mv + (1.0 - b1) * g;
                    *vv = b2 * *vv + (1.0 - b2) * g * g;
                    let mhat = *mv / bc1;
                    let vhat = *vv / bc2;
                    *pv -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }
}
