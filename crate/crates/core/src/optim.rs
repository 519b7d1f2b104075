//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything holding trainable parameters with matching gradient buffers.
///
/// Implementations must visit parameters in a fixed declaration order; the
/// optimizer keys its moment buffers by visit position.
pub trait Parameters {
    fn visit_parameters(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64]));

    fn zero_grad(&mut self) {
        self.visit_parameters(&mut |_, g| g.fill(0.0));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Result<Self> {
        if !(config.lr >= 0.0) || !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(Error::Parameter(format!("invalid Adam configuration {config:?}")));
        }
        Ok(Self {
            config,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
        })
    }

    pub fn with_lr(lr: f64) -> Result<Self> {
        Self::new(AdamConfig {
            lr,
            ..AdamConfig::default()
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    ///
    /// Moment buffers are allocated on the first call; later calls must see
    /// the same parameter layout.
    pub fn apply_update<P: Parameters + ?Sized>(&mut self, params: &mut P) -> Result<()> {
        let initialized = !self.first_moment.is_empty();
        let mut layout = Vec::new();
        params.visit_parameters(&mut |p, _| layout.push(p.len()));
        if initialized {
            let expected: Vec<usize> = self.first_moment.iter().map(Vec::len).collect();
            if expected != layout {
                return Err(Error::State(format!(
                    "parameter layout {layout:?} does not match optimizer moments {expected:?}"
                )));
            }
        } else {
            self.first_moment = layout.iter().map(|&n| vec![0.0; n]).collect();
            self.second_moment = self.first_moment.clone();
        }

        self.step_count += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);

        let mut index = 0;
        let first = &mut self.first_moment;
        let second = &mut self.second_moment;
        params.visit_parameters(&mut |p, g| {
            let m = &mut first[index];
            let v = &mut second[index];
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
            g.fill(0.0);
            index += 1;
        });
        Ok(())
    }
}
