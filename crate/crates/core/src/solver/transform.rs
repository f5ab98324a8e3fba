//! Box-constraint reparameterization `theta = lb + (ub - lb) * sigmoid(z)`.
//! Parameters with infinite bounds are optimized directly.

use crate::autodiff::{Tape, Var};
use crate::error::Result;

/// Relative distance from the bounds applied before taking the logit.
pub const BOUND_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub lb: f64,
    pub ub: f64,
}

impl Transform {
    pub fn new(lb: f64, ub: f64) -> Self {
        Self { lb, ub }
    }

    pub fn is_identity(&self) -> bool {
        !self.lb.is_finite()
    }

    pub fn to_unconstrained(&self, theta: f64) -> f64 {
        if self.is_identity() {
            return theta;
        }
        let w = self.ub - self.lb;
        let t = theta.clamp(self.lb + BOUND_MARGIN * w, self.ub - BOUND_MARGIN * w);
        let p = (t - self.lb) / w;
        (p / (1.0 - p)).ln()
    }

    pub fn from_unconstrained(&self, z: f64) -> f64 {
        if self.is_identity() {
            return z;
        }
        let s = 1.0 / (1.0 + (-z).exp());
        (self.lb + (self.ub - self.lb) * s).clamp(self.lb, self.ub)
    }

    pub fn on_tape(&self, tape: &Tape, z: Var) -> Result<Var> {
        if self.is_identity() {
            return Ok(z);
        }
        Ok(tape.offset(tape.scale(tape.sigmoid(z), self.ub - self.lb), self.lb))
    }
}
