use std::sync::Arc;

use super::{in_box, init_walkers, run_ensemble, run_mh, Algorithm, LogTarget, McmcOptions, PosteriorSummary};
use crate::error::{bail, Result};
use crate::matrix::Matrix;
use crate::models::{check_params, SignalModel};
use crate::volume::{MeasuredData, ParamSet, Protocol};

/// Name of the per-sample noise standard deviation parameter.
pub const NOISE_PARAM: &str = "noise";

/// `-(m/2) ln(2 pi sigma^2) - sum(w^2 (y - s)^2) / (2 sigma^2)` where `m`
/// counts measurements with non-zero weight.
pub fn gaussian_log_likelihood(pred: &[f64], meas: &[f64], weights: Option<&[f64]>, sigma: f64) -> f64 {
    let mut ss = 0.0;
    let mut m = 0usize;
    for i in 0..pred.len() {
        let w = weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        let r = meas[i] - pred[i];
        ss += w * w * r * r;
        m += 1;
    }
    let var = sigma * sigma;
    -0.5 * m as f64 * (std::f64::consts::TAU * var).ln() - ss / (2.0 * var)
}

/// Gaussian likelihood with per-sample noise std and a uniform prior inside
/// the parameter bounds. Parameter order: model parameters, then `noise`.
pub struct GaussianPosterior {
    model: Arc<dyn SignalModel>,
    protocol: Protocol,
    values: Matrix,
    weights: Option<Matrix>,
    names: Vec<String>,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(model: Arc<dyn SignalModel>, data: &MeasuredData, protocol: &Protocol, names: &[String], lb: &[f64], ub: &[f64]) -> Result<Self> {
        let p = model.params().len();
        let want = model.param_names();
        if names.len() != p + 1 || names[..p] != want[..] || names[p] != NOISE_PARAM {
            bail!(Config, "sampling '{}' needs parameters {:?} followed by '{NOISE_PARAM}', got {:?}", model.name(), want, names);
        }
        if !(lb[p] > 0.0) || !ub[p].is_finite() {
            bail!(Config, "'{NOISE_PARAM}' needs finite bounds with lb > 0");
        }
        protocol.check(data.n_samples(), data.n_meas())?;
        let mut probe = vec![0.0; data.n_meas()];
        let mid: Vec<f64> = (0..p).map(|k| if lb[k].is_finite() { 0.5 * (lb[k] + ub[k]) } else { 0.0 }).collect();
        model.predict_sample(&mid, protocol, 0, &mut probe)?;
        Ok(Self {
            model,
            protocol: protocol.clone(),
            values: data.values().clone(),
            weights: data.weights().cloned(),
            names: names.to_vec(),
            lb: lb.to_vec(),
            ub: ub.to_vec(),
        })
    }
}

impl LogTarget for GaussianPosterior {
    fn n_samples(&self) -> usize {
        self.values.rows()
    }

    fn dim(&self) -> usize {
        self.names.len()
    }

    fn lower(&self) -> &[f64] {
        &self.lb
    }

    fn upper(&self) -> &[f64] {
        &self.ub
    }

    fn names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn log_density(&self, sample: usize, theta: &[f64]) -> f64 {
        if !in_box(theta, &self.lb, &self.ub) {
            return f64::NEG_INFINITY;
        }
        let m = self.values.cols();
        let mut pred = vec![0.0; m];
        let p = self.names.len() - 1;
        if self.model.predict_sample(&theta[..p], &self.protocol, sample, &mut pred).is_err() {
            return f64::NEG_INFINITY;
        }
        let v = gaussian_log_likelihood(&pred, self.values.row_slice(sample), self.weights.as_ref().map(|w| w.row_slice(sample)), theta[p]);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

/// Log posterior per sample at `theta` (model parameters plus `noise`).
pub fn log_posterior(theta: &ParamSet, data: &MeasuredData, protocol: &Protocol, model: Arc<dyn SignalModel>) -> Result<Vec<f64>> {
    check_params(model.as_ref(), theta)?;
    let post = GaussianPosterior::new(model, data, protocol, theta.names(), theta.lb(), theta.ub())?;
    if theta.n_samples() != data.n_samples() {
        bail!(Shape, "{} parameter samples for {} data samples", theta.n_samples(), data.n_samples());
    }
    Ok((0..theta.n_samples()).map(|s| post.log_density(s, &theta.sample(s))).collect())
}

/// Samples the posterior of `model` for every sample starting from `x0`
/// (which must include the `noise` parameter).
pub fn run(x0: &ParamSet, data: &MeasuredData, protocol: &Protocol, model: Arc<dyn SignalModel>, opts: &McmcOptions) -> Result<PosteriorSummary> {
    check_params(model.as_ref(), x0)?;
    if x0.n_samples() != data.n_samples() {
        bail!(Shape, "{} parameter samples for {} data samples", x0.n_samples(), data.n_samples());
    }
    let target = GaussianPosterior::new(model, data, protocol, x0.names(), x0.lb(), x0.ub())?;
    let free = opts.free_mask(x0.names())?;
    let n = x0.n_samples();
    let d = x0.n_params();
    let mut init = vec![0.0; n * d];
    for s in 0..n {
        init[s * d..(s + 1) * d].copy_from_slice(&x0.sample(s));
    }
    match opts.algorithm {
        Algorithm::Mh => {
            let steps = opts.steps(x0.names(), x0.lb(), x0.ub())?;
            run_mh(&target, &init, opts, &steps, &free)
        }
        Algorithm::Ensemble => {
            opts.validate(d)?;
            let walkers = init_walkers(&init, x0.lb(), x0.ub(), opts.n_walker, &free, opts.seed);
            run_ensemble(&target, &walkers, opts, &free)
        }
    }
}
