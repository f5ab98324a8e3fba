//! First-order update rules acting on the unconstrained variables.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    Sgdm,
    Rmsprop,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const SGDM_MOMENTUM: f64 = 0.9;
pub const RMSPROP_DECAY: f64 = 0.99;
pub const RMSPROP_EPS: f64 = 1e-8;

/// Moment buffers for one flattened parameter vector.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u32,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, len: usize) -> Self {
        Self { kind, first: vec![0.0; len], second: vec![0.0; len], step: 0 }
    }

    /// Applies one update in place to `z` given gradient `g`.
    pub fn update(&mut self, z: &mut [f64], g: &[f64], lr: f64) {
        assert_eq!(z.len(), g.len());
        assert_eq!(z.len(), self.first.len());
        self.step += 1;
        match self.kind {
            Optimizer::Adam => {
                let c1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
                for i in 0..z.len() {
                    let m = ADAM_BETA1 * self.first[i] + (1.0 - ADAM_BETA1) * g[i];
                    let v = ADAM_BETA2 * self.second[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    self.first[i] = m;
                    self.second[i] = v;
                    z[i] -= lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPS);
                }
            }
            Optimizer::Sgdm => {
                for i in 0..z.len() {
                    let v = SGDM_MOMENTUM * self.first[i] + g[i];
                    self.first[i] = v;
                    z[i] -= lr * v;
                }
            }
            Optimizer::Rmsprop => {
                for i in 0..z.len() {
                    let s = RMSPROP_DECAY * self.second[i] + (1.0 - RMSPROP_DECAY) * g[i] * g[i];
                    self.second[i] = s;
                    z[i] -= lr * g[i] / (s.sqrt() + RMSPROP_EPS);
                }
            }
        }
    }
}
