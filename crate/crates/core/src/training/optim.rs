use std::collections::BTreeMap;

use crate::autograd::Tensor;
use crate::model::{ParameterStore, Precision};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied as `p -= lr * weight_decay * p`.
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moment estimates per parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

/// One bias-corrected AdamW update of the parameters present in `grads`.
/// Parameters without a gradient are left alone.
pub fn optimizer_step(
    params: &mut ParameterStore,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    cfg: &AdamWConfig,
    lr: f64,
) {
    let single = params.precision() == Precision::Single;
    state.step += 1;
    for (name, g) in grads {
        if let Some(p) = params.get_mut(name) {
            state.update(name, p, g, cfg, lr, single);
        }
    }
}

/// [`optimizer_step`] over a plain tensor map, in double precision.
pub fn optimizer_step_tensors(
    params: &mut BTreeMap<String, Tensor>,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    cfg: &AdamWConfig,
    lr: f64,
) {
    state.step += 1;
    for (name, g) in grads {
        if let Some(p) = params.get_mut(name) {
            state.update(name, p, g, cfg, lr, false);
        }
    }
}

impl AdamState {
    fn update(&mut self, name: &str, p: &mut Tensor, g: &Tensor, cfg: &AdamWConfig, lr: f64, single: bool) {
        assert_eq!(p.shape(), g.shape(), "gradient shape mismatch for {name}");
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let m = self.m.entry(name.to_string()).or_insert_with(|| vec![0.0; g.len()]);
        let v = self.v.entry(name.to_string()).or_insert_with(|| vec![0.0; g.len()]);
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let update = (*mi / c1) / ((*vi / c2).sqrt() + cfg.eps);
            *w -= lr * (update + cfg.weight_decay * *w);
            if single {
                *w = *w as f32 as f64;
            }
        }
    }
}

/// Linear warmup from 0 to `peak_lr`, then linear decay to 0 at `total_steps`.
pub fn lr_schedule(step: usize, warmup_steps: usize, total_steps: usize, peak_lr: f64) -> f64 {
    if step < warmup_steps {
        return peak_lr * step as f64 / warmup_steps as f64;
    }
    if step >= total_steps {
        return 0.0;
    }
    peak_lr * (total_steps - step) as f64 / (total_steps - warmup_steps) as f64
}
