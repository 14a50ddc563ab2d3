use serde::{Deserialize, Serialize};

use super::params::ParamStore;

/// Global gradient norm above which gradients are rescaled before a step.
pub const CLIP_NORM: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
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

/// Adam with bias correction and global-norm clipping.
///
/// Moment buffers are indexed by parameter order; the optimizer must be used
/// with a single store whose layout does not change.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Global L2 norm of the gradients of all unfrozen parameters.
    pub fn grad_norm(store: &ParamStore) -> f64 {
        store
            .iter()
            .filter(|(_, p)| !p.frozen)
            .flat_map(|(_, p)| p.gradient.data().iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Applies one update to every unfrozen parameter, then zeroes all
    /// gradients.
    pub fn step(&mut self, store: &mut ParamStore) {
        if self.first.len() != store.len() {
            self.first = store
                .iter()
                .map(|(_, p)| vec![0.0; p.value.len()])
                .collect();
            self.second = self.first.clone();
        }
        let norm = Self::grad_norm(store);
        let clip = if norm > CLIP_NORM {
            CLIP_NORM / norm
        } else {
            1.0
        };

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let correct1 = 1.0 - beta1.powi(t);
        let correct2 = 1.0 - beta2.powi(t);

        for (i, p) in store.params_mut().iter_mut().enumerate() {
            if p.frozen {
                continue;
            }
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let grad = p.gradient.data();
            let value = p.value.data_mut();
            for j in 0..value.len() {
                let g = grad[j] * clip;
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] / correct1;
                let v_hat = v[j] / correct2;
                value[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        store.zero_grad();
    }
}
