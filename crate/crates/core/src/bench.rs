//! Timing harness and agreement statistics across solvers.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::models::{example_protocol, SignalModel};
use crate::nlls::{fit_nlls, NllsOptions};
use crate::rng::Stream;
use crate::samplers::{self, GaussianPosterior, McmcOptions, NOISE_PARAM};
use crate::sim::{simulate, NoiseKind};
use crate::solver::{optimize, SolverOptions};
use crate::stats;
use crate::volume::{MeasuredData, ParamSet, Protocol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchSolver {
    Adam,
    Mh,
    Ensemble,
    Nlls,
}

impl BenchSolver {
    pub fn label(&self) -> &'static str {
        match self {
            BenchSolver::Adam => "adam",
            BenchSolver::Mh => "mh",
            BenchSolver::Ensemble => "ensemble",
            BenchSolver::Nlls => "nlls",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub counts: Vec<usize>,
    pub solvers: Vec<BenchSolver>,
    pub repeats: usize,
    pub snr: f64,
    pub seed: u64,
    pub adam: SolverOptions,
    pub mcmc: McmcOptions,
    pub nlls: NllsOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            counts: vec![100, 1000, 10_000],
            solvers: vec![BenchSolver::Adam, BenchSolver::Nlls],
            repeats: 3,
            snr: 50.0,
            seed: 0,
            adam: SolverOptions { iteration: 200, tol: 0.0, convergence_value: 0.0, initial_learn_rate: 0.01, ..Default::default() },
            mcmc: McmcOptions { iteration: 1000, ..Default::default() },
            nlls: NllsOptions::default(),
        }
    }
}

/// One CSV row. `extrapolated` rows carry the oracle's per-sample time
/// from the smallest count scaled linearly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub solver: String,
    pub count: usize,
    pub repeat: usize,
    pub wall_s: f64,
    pub per_sample_s: f64,
    pub extrapolated: bool,
}

pub const CSV_HEADER: &str = "solver,count,repeat,wall_s,per_sample_s,extrapolated";

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.6e},{:.6e},{}", r.solver, r.count, r.repeat, r.wall_s, r.per_sample_s, r.extrapolated);
    }
    s
}

/// Every sample starts at the middle of the model's bounds.
pub fn start_params(model: &dyn SignalModel, n: usize) -> Result<ParamSet> {
    let (lb, ub) = (model.default_lb(), model.default_ub());
    let mid: Vec<f64> = lb.iter().zip(&ub).map(|(l, u)| if l.is_finite() && u.is_finite() { 0.5 * (l + u) } else { 0.0 }).collect();
    let names = model.param_names();
    ParamSet::uniform(&names, n, &mid, &lb, &ub)
}

/// Appends the `noise` parameter with bounds `[1e-4 init, 100 init]`.
pub fn with_noise(x0: &ParamSet, init: f64) -> Result<ParamSet> {
    x0.with_param(NOISE_PARAM, vec![init; x0.n_samples()], 1e-4 * init, 100.0 * init)
}

/// Truth uniform over the middle 60% of each bound interval, Rician noise
/// at `snr`.
pub fn dataset(model: &dyn SignalModel, n: usize, snr: f64, seed: u64) -> Result<(ParamSet, MeasuredData, Protocol)> {
    let protocol = example_protocol(model);
    let (lb, ub) = (model.default_lb(), model.default_ub());
    let fields = (0..lb.len())
        .map(|j| (0..n).map(|s| lb[j] + (ub[j] - lb[j]) * (0.2 + 0.6 * Stream::new(seed, s as u64, j as u64, 0).uniform(0))).collect())
        .collect();
    let names = model.param_names().into_iter().map(String::from).collect();
    let truth = ParamSet::new(names, fields, lb, ub)?;
    let data = simulate(model, &truth, &protocol, protocol.n_meas(), snr, NoiseKind::Rician, seed ^ 0x5eed)?;
    Ok((truth, data, protocol))
}

fn run_solver(which: BenchSolver, model: &Arc<dyn SignalModel>, data: &MeasuredData, protocol: &Protocol, cfg: &BenchConfig) -> Result<()> {
    let x0 = start_params(model.as_ref(), data.n_samples())?;
    match which {
        BenchSolver::Adam => {
            optimize(&x0, data, protocol, model.clone(), &cfg.adam)?;
        }
        BenchSolver::Nlls => {
            fit_nlls(model.as_ref(), data, protocol, &x0, &cfg.nlls)?;
        }
        BenchSolver::Mh | BenchSolver::Ensemble => {
            let mut opts = cfg.mcmc.clone();
            opts.algorithm = if which == BenchSolver::Mh { samplers::Algorithm::Mh } else { samplers::Algorithm::Ensemble };
            samplers::run(&with_noise(&x0, 1.0 / cfg.snr)?, data, protocol, model.clone(), &opts)?;
        }
    }
    Ok(())
}

/// Times each solver at each count, repeats run back to back. The NLLS
/// oracle runs only at the smallest count.
pub fn bench_scaling(model: Arc<dyn SignalModel>, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.counts.is_empty() || cfg.counts.windows(2).any(|w| w[0] >= w[1]) || cfg.counts[0] == 0 {
        bail!(Config, "bench counts must be positive and strictly ascending, got {:?}", cfg.counts);
    }
    if cfg.repeats == 0 {
        bail!(Config, "bench needs at least one repeat");
    }
    let mut rows = Vec::new();
    for &which in &cfg.solvers {
        let mut oracle_per_sample = Vec::new();
        for (ci, &count) in cfg.counts.iter().enumerate() {
            if which == BenchSolver::Nlls && ci > 0 {
                for (repeat, &ps) in oracle_per_sample.iter().enumerate() {
                    rows.push(BenchRow { solver: which.label().into(), count, repeat, wall_s: ps * count as f64, per_sample_s: ps, extrapolated: true });
                }
                continue;
            }
            let (_, data, protocol) = dataset(model.as_ref(), count, cfg.snr, cfg.seed)?;
            for repeat in 0..cfg.repeats {
                let t0 = Instant::now();
                run_solver(which, &model, &data, &protocol, cfg)?;
                let wall = t0.elapsed().as_secs_f64().max(1e-9);
                let per = wall / count as f64;
                if which == BenchSolver::Nlls {
                    oracle_per_sample.push(per);
                }
                rows.push(BenchRow { solver: which.label().into(), count, repeat, wall_s: wall, per_sample_s: per, extrapolated: false });
            }
        }
    }
    Ok(rows)
}

/// Estimates of one parameter against a reference (truth or another method).
#[derive(Debug, Clone, Serialize)]
pub struct MethodStats {
    pub method: String,
    pub bias: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    pub cov: f64,
    pub iqr: f64,
    pub pearson: f64,
}

pub fn agreement(method: &str, estimates: &[f64], reference: &[f64]) -> Result<MethodStats> {
    let ba = stats::bland_altman(estimates, reference)?;
    Ok(MethodStats {
        method: method.into(),
        bias: ba.bias,
        loa_low: ba.loa_low,
        loa_high: ba.loa_high,
        cov: stats::cov(estimates)?,
        iqr: stats::iqr(estimates)?,
        pearson: stats::pearson(estimates, reference)?,
    })
}

pub fn stats_to_csv(rows: &[MethodStats]) -> String {
    let mut s = String::from("method,bias,loa_low,loa_high,cov,iqr,pearson\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}", r.method, r.bias, r.loa_low, r.loa_high, r.cov, r.iqr, r.pearson);
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct MhTiming {
    pub samples: usize,
    pub lockstep_s: f64,
    pub reference_s: f64,
    pub speedup: f64,
    /// Posterior means agree bit for bit.
    pub identical: bool,
}

/// Lockstep MH against the one-sample-at-a-time reference on the same data.
pub fn time_mh(model: Arc<dyn SignalModel>, samples: usize, iteration: usize, snr: f64, seed: u64) -> Result<MhTiming> {
    let (_, data, protocol) = dataset(model.as_ref(), samples, snr, seed)?;
    let x0 = with_noise(&start_params(model.as_ref(), samples)?, 1.0 / snr)?;
    let target = GaussianPosterior::new(model, &data, &protocol, x0.names(), x0.lb(), x0.ub())?;
    let opts = McmcOptions { iteration, seed, ..Default::default() };
    let steps = opts.steps(x0.names(), x0.lb(), x0.ub())?;
    let free = opts.free_mask(x0.names())?;
    let d = x0.n_params();
    let mut init = vec![0.0; samples * d];
    for s in 0..samples {
        init[s * d..(s + 1) * d].copy_from_slice(&x0.sample(s));
    }
    let t0 = Instant::now();
    let a = samplers::run_mh(&target, &init, &opts, &steps, &free)?;
    let lockstep_s = t0.elapsed().as_secs_f64().max(1e-9);
    let t0 = Instant::now();
    let b = samplers::run_mh_reference(&target, &init, &opts, &steps, &free)?;
    let reference_s = t0.elapsed().as_secs_f64().max(1e-9);
    Ok(MhTiming { samples, lockstep_s, reference_s, speedup: reference_s / lockstep_s, identical: a.mean == b.mean && a.std == b.std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MonoExponential;

    fn small() -> BenchConfig {
        BenchConfig {
            counts: vec![20, 40],
            solvers: vec![BenchSolver::Adam, BenchSolver::Mh, BenchSolver::Nlls],
            repeats: 2,
            adam: SolverOptions { iteration: 5, ..BenchConfig::default().adam },
            mcmc: McmcOptions { iteration: 50, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn one_row_per_solver_count_repeat() {
        let rows = bench_scaling(Arc::new(MonoExponential::default()), &small()).unwrap();
        assert_eq!(rows.len(), 3 * 2 * 2);
        assert!(rows.iter().all(|r| r.wall_s > 0.0 && r.per_sample_s > 0.0));
        let ex: Vec<_> = rows.iter().filter(|r| r.extrapolated).collect();
        assert_eq!(ex.len(), 2);
        assert!(ex.iter().all(|r| r.solver == "nlls" && r.count == 40));
        let csv = rows_to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 13);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 6));
    }

    #[test]
    fn bad_counts() {
        let mut c = small();
        c.counts = vec![40, 20];
        assert!(matches!(bench_scaling(Arc::new(MonoExponential::default()), &c), Err(crate::Error::Config(_))));
    }

    #[test]
    fn agreement_rows() {
        let s = agreement("x", &[1.0, 2.0, 3.0, 4.0], &[1.5, 2.5, 3.5, 4.5]).unwrap();
        assert_eq!(s.bias, -0.5);
        assert!((s.pearson - 1.0).abs() < 1e-15);
        assert_eq!(s.iqr, 1.5);
        assert_eq!(stats_to_csv(&[s]).lines().count(), 2);
    }

    #[test]
    fn mh_timing_paths_agree() {
        let t = time_mh(Arc::new(MonoExponential::default()), 30, 100, 50.0, 1).unwrap();
        assert!(t.identical);
    }
}
