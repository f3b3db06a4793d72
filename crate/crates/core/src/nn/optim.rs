use serde::{Deserialize, Serialize};

use super::param::Param;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer over an ordered list of parameter groups.
///
/// Moment buffers are allocated lazily on the first step and matched to
/// parameters by position, so every call must pass the same parameters in
/// the same order.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. `groups` pairs a learning rate with the parameters it drives.
    pub fn step(&mut self, groups: &mut [(f64, Vec<&mut Param>)]) {
        let total: usize = groups.iter().map(|(_, ps)| ps.len()).sum();
        if self.first.is_empty() {
            for (_, ps) in groups.iter() {
                for p in ps {
                    self.first.push(vec![0.0; p.len()]);
                    self.second.push(vec![0.0; p.len()]);
                }
            }
        }
        assert_eq!(self.first.len(), total, "parameter list changed between steps");
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let mut slot = 0;
        for (lr, ps) in groups.iter_mut() {
            for p in ps.iter_mut() {
                let m = &mut self.first[slot];
                let v = &mut self.second[slot];
                for i in 0..p.value.len() {
                    let g = p.grad[i];
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    p.value[i] -= *lr * mhat / (vhat.sqrt() + eps);
                }
                slot += 1;
            }
        }
    }
}
