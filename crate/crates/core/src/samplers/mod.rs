//! MCMC over all samples at once: Metropolis-Hastings with a joint normal
//! proposal and the affine-invariant stretch-move ensemble.
//!
//! Every random draw comes from [`Stream`](crate::rng::Stream) keyed on
//! `(seed, sample, walker, iteration)`, so results do not depend on how
//! samples are scheduled across threads.

mod ensemble;
mod mh;
mod posterior;
mod summary;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

pub use ensemble::{init_walkers, run_ensemble, stretch_z};
pub use mh::{run_mh, run_mh_reference};
pub use posterior::{gaussian_log_likelihood, log_posterior, run, GaussianPosterior, NOISE_PARAM};
pub use summary::{PosteriorSummary, MCSE_BATCHES};

/// Samples handled by one parallel task.
pub(crate) const CHUNK: usize = 256;

/// Per-sample unnormalized log density over a box.
pub trait LogTarget: Sync {
    fn n_samples(&self) -> usize;

    fn dim(&self) -> usize;

    fn lower(&self) -> &[f64];

    fn upper(&self) -> &[f64];

    fn names(&self) -> Vec<String> {
        (0..self.dim()).map(|k| format!("p{k}")).collect()
    }

    /// `-inf` outside the box.
    fn log_density(&self, sample: usize, theta: &[f64]) -> f64;

    /// One density per row of `thetas`; row `r` belongs to `samples[r]`.
    fn log_density_batch(&self, samples: &[usize], thetas: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (r, &s) in samples.iter().enumerate() {
            out[r] = self.log_density(s, &thetas[r * d..(r + 1) * d]);
        }
    }
}

pub(crate) fn in_box(theta: &[f64], lb: &[f64], ub: &[f64]) -> bool {
    theta.iter().zip(lb.iter().zip(ub)).all(|(x, (l, u))| *x >= *l && *x <= *u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Mh,
    Ensemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PointEstimate {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcOptions {
    pub algorithm: Algorithm,
    pub iteration: usize,
    /// Fraction of initial iterations discarded.
    pub burnin: f64,
    pub thinning: usize,
    #[serde(rename = "Nwalker")]
    pub n_walker: usize,
    /// Stretch scale `a > 1`.
    #[serde(rename = "StepSize")]
    pub step_size: f64,
    /// Proposal std per parameter; missing entries use 2% of the bound width.
    #[serde(rename = "xStepSize")]
    pub x_step_size: BTreeMap<String, f64>,
    /// Independent MH chains per sample, pooled in the summary.
    pub repetition: usize,
    pub seed: u64,
    /// Parameters held at their starting value.
    pub fixed: Vec<String>,
    #[serde(rename = "keepSamples")]
    pub keep_samples: bool,
    #[serde(rename = "pointEstimate")]
    pub point_estimate: PointEstimate,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Mh,
            iteration: 20_000,
            burnin: 0.2,
            thinning: 1,
            n_walker: 50,
            step_size: 2.0,
            x_step_size: BTreeMap::new(),
            repetition: 1,
            seed: 0,
            fixed: Vec::new(),
            keep_samples: false,
            point_estimate: PointEstimate::Mean,
        }
    }
}

/// Default MH proposal std as a fraction of the bound width.
pub const DEFAULT_STEP_FRACTION: f64 = 0.02;

impl McmcOptions {
    pub fn burn(&self) -> usize {
        (self.burnin * self.iteration as f64).floor() as usize
    }

    /// Retained steps per chain.
    pub fn n_keep(&self) -> usize {
        (self.iteration - self.burn().min(self.iteration)) / self.thinning.max(1)
    }

    /// Retained-step index for 1-based iteration `t`, if kept.
    pub(crate) fn keep_index(&self, t: usize) -> Option<usize> {
        let burn = self.burn();
        (t > burn && (t - burn).is_multiple_of(self.thinning)).then(|| (t - burn) / self.thinning - 1)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.iteration < 1 {
            bail!(Config, "iteration must be >= 1");
        }
        if !(0.0..1.0).contains(&self.burnin) {
            bail!(Config, "burnin must be in [0, 1), got {}", self.burnin);
        }
        if self.thinning < 1 {
            bail!(Config, "thinning must be >= 1");
        }
        if self.n_keep() == 0 {
            bail!(Config, "no draws retained: iteration {} burnin {} thinning {}", self.iteration, self.burnin, self.thinning);
        }
        match self.algorithm {
            Algorithm::Mh if self.repetition < 1 => bail!(Config, "repetition must be >= 1"),
            Algorithm::Ensemble => {
                if !self.n_walker.is_multiple_of(2) {
                    bail!(Config, "Nwalker must be even, got {}", self.n_walker);
                }
                if self.n_walker < 2 * dim + 2 {
                    bail!(Config, "Nwalker must be >= {} for {dim} parameters, got {}", 2 * dim + 2, self.n_walker);
                }
                if !(self.step_size > 1.0) || !self.step_size.is_finite() {
                    bail!(Config, "StepSize must be > 1, got {}", self.step_size);
                }
            }
            Algorithm::Mh => {}
        }
        if self.x_step_size.values().any(|v| !(*v > 0.0) || !v.is_finite()) {
            bail!(Config, "xStepSize entries must be positive");
        }
        Ok(())
    }

    /// Free-coordinate mask for `names`; unknown fixed names are an error.
    pub fn free_mask(&self, names: &[String]) -> Result<Vec<bool>> {
        for f in &self.fixed {
            if !names.contains(f) {
                bail!(Config, "fixed parameter '{f}' is not in {names:?}");
            }
        }
        let free: Vec<bool> = names.iter().map(|n| !self.fixed.contains(n)).collect();
        if !free.iter().any(|&f| f) {
            bail!(Config, "every parameter is fixed");
        }
        Ok(free)
    }

    /// Proposal std per coordinate.
    pub fn steps(&self, names: &[String], lb: &[f64], ub: &[f64]) -> Result<Vec<f64>> {
        for k in self.x_step_size.keys() {
            if !names.contains(k) {
                bail!(Config, "xStepSize given for unknown parameter '{k}'");
            }
        }
        Ok(names
            .iter()
            .enumerate()
            .map(|(i, n)| match self.x_step_size.get(n) {
                Some(v) => *v,
                None if lb[i].is_finite() => DEFAULT_STEP_FRACTION * (ub[i] - lb[i]),
                None => 0.1,
            })
            .collect())
    }
}
