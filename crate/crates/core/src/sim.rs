//! Synthetic measurements from a forward model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::models::{check_params, predict, SignalModel};
use crate::rng::Stream;
use crate::volume::{MeasuredData, ParamSet, Protocol};

/// Walker id reserved for measurement noise draws.
const NOISE_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// Real `N(0, sigma)` added to the signal.
    #[default]
    Gaussian,
    /// Magnitude of the signal plus complex `N(0, sigma)` noise.
    Rician,
}

/// Per-parameter ground-truth distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum TruthDist {
    Constant { value: f64 },
    /// `mean + std * N(0,1)`, optionally folded with `abs`.
    Normal {
        mean: f64,
        std: f64,
        #[serde(default)]
        abs: bool,
    },
    Uniform { low: f64, high: f64 },
}

/// Draws a truth field per parameter, clipped into `[lb + m, ub - m]` with
/// `m = margin * (ub - lb)`.
pub fn draw_truth(model: &dyn SignalModel, n: usize, dists: &BTreeMap<String, TruthDist>, margin: f64, seed: u64) -> Result<ParamSet> {
    let names: Vec<String> = model.param_names().into_iter().map(String::from).collect();
    let (lb, ub) = (model.default_lb(), model.default_ub());
    for k in dists.keys() {
        if !names.contains(k) {
            bail!(Config, "truth given for unknown parameter '{k}' of model '{}'", model.name());
        }
    }
    let mut fields = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let Some(dist) = dists.get(name) else {
            bail!(Config, "no truth distribution for parameter '{name}'");
        };
        let (lo, hi) = if lb[j].is_finite() {
            let m = margin * (ub[j] - lb[j]);
            (lb[j] + m, ub[j] - m)
        } else {
            (lb[j], ub[j])
        };
        let field = (0..n)
            .map(|s| {
                let st = Stream::new(seed, s as u64, j as u64, 0);
                let v = match dist {
                    TruthDist::Constant { value } => *value,
                    TruthDist::Normal { mean, std, abs } => {
                        let v = mean + std * st.normal(0);
                        if *abs {
                            v.abs()
                        } else {
                            v
                        }
                    }
                    TruthDist::Uniform { low, high } => low + (high - low) * st.uniform(0),
                };
                v.clamp(lo, hi)
            })
            .collect();
        fields.push(field);
    }
    ParamSet::new(names, fields, lb, ub)
}

/// Forward-simulates `truth` and adds noise with `sigma = reference / snr`
/// per sample. `snr = inf` returns the clean signal.
pub fn simulate(model: &dyn SignalModel, truth: &ParamSet, protocol: &Protocol, n_meas: usize, snr: f64, noise: NoiseKind, seed: u64) -> Result<MeasuredData> {
    if !(snr > 0.0) {
        bail!(Config, "SNR must be > 0, got {snr}");
    }
    check_params(model, truth)?;
    let mut y = predict(model, truth, protocol, n_meas)?;
    if snr.is_finite() {
        let m = n_meas;
        for s in 0..truth.n_samples() {
            let sigma = model.reference_level(&truth.sample(s)) / snr;
            for (k, v) in y.as_mut_slice()[s * m..(s + 1) * m].iter_mut().enumerate() {
                let st = Stream::new(seed, s as u64, NOISE_STREAM, k as u64);
                *v = match noise {
                    NoiseKind::Gaussian => *v + sigma * st.normal(0),
                    NoiseKind::Rician => (*v + sigma * st.normal(0)).hypot(sigma * st.normal(1)),
                };
            }
        }
    }
    MeasuredData::new(y, None)
}
