//! Built-in forward models and the model contract.
//!
//! A model declares named parameters with default bounds, the protocol axes
//! it reads, and a differentiable forward map built from tape operations.
//! Samplers use the plain-`f64` [`SignalModel::predict_sample`] path, which
//! must agree with `forward`.

mod biexp;
mod identity;
mod monoexp;
mod smt;

use std::sync::Arc;

pub use biexp::BiExponential;
pub use identity::Identity;
pub use monoexp::MonoExponential;
pub use smt::{stick_kernel, BallStickSmt};

use crate::autodiff::{Tape, Var};
use crate::error::{bail, Result};
use crate::matrix::Matrix;
use crate::volume::{ParamSet, Protocol};

/// Name and default bounds of one model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
}

impl ParamSpec {
    pub fn new(name: &str, lb: f64, ub: f64) -> Self {
        Self { name: name.to_string(), lb, ub }
    }
}

pub trait SignalModel: Send + Sync {
    fn name(&self) -> &str;

    fn params(&self) -> &[ParamSpec];

    /// Protocol axes read by the forward map.
    fn protocol_axes(&self) -> &[&str];

    /// Predicted signal `[n x n_meas]` from parameter columns `[n x 1]`
    /// given in [`SignalModel::params`] order.
    fn forward(&self, tape: &Tape, params: &[Var], protocol: &Protocol) -> Result<Var>;

    /// Prediction for one sample; `out.len()` is the measurement count.
    fn predict_sample(&self, theta: &[f64], protocol: &Protocol, sample: usize, out: &mut [f64]) -> Result<()> {
        let tape = Tape::new();
        let vars = theta.iter().map(|&v| tape.constant(Matrix::scalar(v))).collect::<Result<Vec<_>>>()?;
        let local = protocol.select(&[sample]);
        let y = self.forward(&tape, &vars, &local)?;
        let y = tape.broadcast(y, 1, out.len())?;
        out.copy_from_slice(tape.value(y).as_slice());
        Ok(())
    }

    /// Predictions for consecutive samples `first..first + rows`; `thetas`
    /// holds one parameter vector per row, `out` one signal row per sample.
    fn predict_batch(&self, thetas: &[f64], protocol: &Protocol, first: usize, out: &mut [f64]) -> Result<()> {
        let p = self.params().len();
        let rows = thetas.len() / p;
        let m = out.len() / rows.max(1);
        for r in 0..rows {
            self.predict_sample(&thetas[r * p..(r + 1) * p], protocol, first + r, &mut out[r * m..(r + 1) * m])?;
        }
        Ok(())
    }

    /// Signal level that defines SNR for synthetic noise (e.g. `S0`).
    fn reference_level(&self, _theta: &[f64]) -> f64 {
        1.0
    }

    fn param_names(&self) -> Vec<&str> {
        self.params().iter().map(|p| p.name.as_str()).collect()
    }

    fn default_lb(&self) -> Vec<f64> {
        self.params().iter().map(|p| p.lb).collect()
    }

    fn default_ub(&self) -> Vec<f64> {
        self.params().iter().map(|p| p.ub).collect()
    }
}

/// Looks up a built-in model by registry name.
pub fn by_name(name: &str) -> Result<Arc<dyn SignalModel>> {
    Ok(match name {
        "monoexp" => Arc::new(MonoExponential::default()),
        "biexp" => Arc::new(BiExponential::default()),
        "smt_ballstick" => Arc::new(BallStickSmt::default()),
        "identity" => Arc::new(Identity::default()),
        other => bail!(Config, "unknown model '{other}' (have {:?})", registry()),
    })
}

pub fn registry() -> &'static [&'static str] {
    &["monoexp", "biexp", "smt_ballstick", "identity"]
}

/// Evaluates the forward map for every sample of `params` without gradients.
pub fn predict(model: &dyn SignalModel, params: &ParamSet, protocol: &Protocol, n_meas: usize) -> Result<Matrix> {
    check_params(model, params)?;
    let n = params.n_samples();
    protocol.check(n, n_meas)?;
    let p = params.n_params();
    let mut thetas = vec![0.0; n * p];
    for s in 0..n {
        for (j, f) in params.fields().iter().enumerate() {
            thetas[s * p + j] = f[s];
        }
    }
    let mut out = vec![0.0; n * n_meas];
    model.predict_batch(&thetas, protocol, 0, &mut out)?;
    Matrix::new(n, n_meas, out)
}

/// Eight-measurement acquisition for each protocol axis the model reads:
/// echo times 3..38 ms or b-values 0..3 ms/um^2 plus a repeated b=0.
pub fn example_protocol(model: &dyn SignalModel) -> Protocol {
    let mut p = Protocol::new();
    for axis in model.protocol_axes() {
        let v: Vec<f64> = match *axis {
            "TE_s" => (0..8).map(|k| 0.003 + 0.005 * k as f64).collect(),
            _ => vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 0.0],
        };
        p.insert(axis, Matrix::row(v)).expect("finite protocol");
    }
    p
}

/// Parameter names of `params` must match the model's, in order.
pub fn check_params(model: &dyn SignalModel, params: &ParamSet) -> Result<()> {
    let want = model.param_names();
    if params.names().len() < want.len() || params.names()[..want.len()].iter().zip(&want).any(|(a, b)| a != b) {
        bail!(Config, "model '{}' expects parameters {:?}, got {:?}", model.name(), want, params.names());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn forward_and_sample_paths_agree() {
        for name in registry() {
            let model = by_name(name).unwrap();
            let n = 7;
            let proto = example_protocol(model.as_ref());
            let specs = model.params().to_vec();
            let fields: Vec<Vec<f64>> = specs
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    (0..n)
                        .map(|i| s.lb + (s.ub - s.lb) * Stream::new(3, i as u64, j as u64, 0).uniform(0))
                        .collect()
                })
                .collect();
            let tape = Tape::new();
            let vars: Vec<Var> = fields.iter().map(|f| tape.param(Matrix::column(f.clone())).unwrap()).collect();
            let y = model.forward(&tape, &vars, &proto).unwrap();
            let y = tape.broadcast(y, n, 8).unwrap();
            let y = tape.value(y).clone();
            let mut out = vec![0.0; 8];
            for s in 0..n {
                let theta: Vec<f64> = fields.iter().map(|f| f[s]).collect();
                model.predict_sample(&theta, &proto, s, &mut out).unwrap();
                for m in 0..8 {
                    assert!((out[m] - y.get(s, m)).abs() <= 1e-14 * y.get(s, m).abs().max(1.0), "{name}");
                }
            }
        }
    }

    #[test]
    fn unknown_model() {
        assert!(matches!(by_name("nexi"), Err(crate::Error::Config(_))));
    }
}
