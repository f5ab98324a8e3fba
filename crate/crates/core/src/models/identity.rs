use super::{ParamSpec, SignalModel};
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::volume::Protocol;

/// `S = theta` at every measurement.
#[derive(Debug, Clone)]
pub struct Identity {
    params: Vec<ParamSpec>,
}

impl Default for Identity {
    fn default() -> Self {
        Self::with_bounds(-10.0, 10.0)
    }
}

impl Identity {
    pub fn with_bounds(lb: f64, ub: f64) -> Self {
        Self { params: vec![ParamSpec::new("theta", lb, ub)] }
    }
}

impl SignalModel for Identity {
    fn name(&self) -> &str {
        "identity"
    }

    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn protocol_axes(&self) -> &[&str] {
        &[]
    }

    fn forward(&self, _tape: &Tape, params: &[Var], _protocol: &Protocol) -> Result<Var> {
        Ok(params[0])
    }

    fn predict_sample(&self, theta: &[f64], _protocol: &Protocol, _sample: usize, out: &mut [f64]) -> Result<()> {
        out.fill(theta[0]);
        Ok(())
    }
}
