use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{arc_model, resolve};
use crate::bench::{start_params, with_noise};
use crate::error::{bail, Result};
use crate::io::{read_mask, read_nifti, read_protocol, write_nifti, write_param_maps, FloatType};
use crate::matrix::Matrix;
use crate::models::example_protocol;
use crate::nlls::{fit_nlls, NllsOptions};
use crate::regularizers::RegularizerConfig;
use crate::samplers::{self, McmcOptions};
use crate::sim::{draw_truth, simulate, NoiseKind, TruthDist};
use crate::solver::{optimize, SolverOptions};
use crate::volume::{pack, unpack, GridData, Mask, MeasuredData, ParamSet};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: String,
    /// Grid size; samples are all cells.
    pub dims: [usize; 3],
    pub truth: BTreeMap<String, TruthDist>,
    /// Protocol JSON; the model's example protocol when absent.
    #[serde(default)]
    pub protocol: Option<PathBuf>,
    pub snr: f64,
    #[serde(default)]
    pub noise: NoiseKind,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
    #[serde(default)]
    pub float: FloatType,
    /// Truth is clipped this fraction of the bound width inside the bounds.
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    0.01
}

pub fn simulate_cmd(cfg: SimulateConfig, base: &Path) -> Result<()> {
    let model = arc_model(&cfg.model)?;
    let n: usize = cfg.dims.iter().product();
    let protocol = match &cfg.protocol {
        Some(p) => read_protocol(&resolve(base, p))?,
        None => example_protocol(model.as_ref()),
    };
    let n_meas = protocol.n_meas();
    let truth = draw_truth(model.as_ref(), n, &cfg.truth, cfg.margin, cfg.seed)?;
    let data = simulate(model.as_ref(), &truth, &protocol, n_meas, cfg.snr, cfg.noise, cfg.seed)?;
    let out = resolve(base, &cfg.output);
    fs::create_dir_all(&out)?;
    let mask = Mask::full(cfg.dims)?;
    write_nifti(&out.join("data.nii"), &GridData::new(cfg.dims, n_meas, data.values().as_slice().to_vec())?, cfg.float)?;
    write_nifti(&out.join("mask.nii"), &GridData::new(cfg.dims, 1, vec![1.0; n])?, cfg.float)?;
    write_param_maps(&out, "truth_", &truth, &mask, cfg.float)?;
    fs::write(out.join("protocol.json"), protocol.to_json()?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitSolver {
    Adam,
    Mh,
    Ensemble,
    NllsOracle,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub model: String,
    pub solver: FitSolver,
    pub data: PathBuf,
    #[serde(default)]
    pub mask: Option<PathBuf>,
    /// Per-cell weights, one frame or one per measurement.
    #[serde(default)]
    pub weights: Option<PathBuf>,
    pub protocol: PathBuf,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adam: SolverOptions,
    #[serde(default)]
    pub mcmc: McmcOptions,
    #[serde(default)]
    pub nlls: NllsOptions,
    #[serde(default)]
    pub regularizers: Vec<RegularizerConfig>,
    /// Starting value per parameter; the bound midpoint otherwise.
    #[serde(default)]
    pub init: BTreeMap<String, f64>,
    #[serde(default)]
    pub bounds: BTreeMap<String, [f64; 2]>,
    /// Starting noise level for MCMC; 5% of the largest measurement otherwise.
    #[serde(default)]
    pub noise_init: Option<f64>,
    #[serde(default)]
    pub float: FloatType,
}

#[derive(Serialize)]
struct AdamReport<'a> {
    solver: &'static str,
    iterations_run: usize,
    best_iteration: usize,
    stop_reason: &'a crate::solver::StopReason,
    loss_history: &'a [f64],
}

pub fn fit_cmd(cfg: FitConfig, base: &Path) -> Result<()> {
    let model = arc_model(&cfg.model)?;
    let volume = read_nifti(&resolve(base, &cfg.data))?;
    let mask = match &cfg.mask {
        Some(p) => read_mask(&resolve(base, p))?,
        None => Mask::full(volume.dims)?,
    };
    if mask.dims() != volume.dims {
        bail!(Shape, "mask dims {:?} differ from data dims {:?}", mask.dims(), volume.dims);
    }
    let m = volume.n_meas;
    let mut wgrid: Vec<f64> = match &cfg.weights {
        None => vec![1.0; volume.data.len()],
        Some(p) => {
            let w = read_nifti(&resolve(base, p))?;
            if w.dims != volume.dims || (w.n_meas != 1 && w.n_meas != m) {
                bail!(Shape, "weights of dims {:?} x {} do not match data {:?} x {m}", w.dims, w.n_meas, volume.dims);
            }
            (0..volume.data.len()).map(|i| if w.n_meas == 1 { w.data[i / m] } else { w.data[i] }).collect()
        }
    };
    // whole grid with the mask folded into the weights, or packed in-mask samples
    let full_grid = cfg.solver == FitSolver::Adam && !cfg.adam.is_optimise_memory;
    let fit_mask = if full_grid {
        for (i, w) in wgrid.iter_mut().enumerate() {
            if !mask.inside()[i / m] {
                *w = 0.0;
            }
        }
        Mask::full(volume.dims)?
    } else {
        mask.clone()
    };
    let packed = pack(&volume, &fit_mask)?;
    let wpacked = pack(&GridData::new(volume.dims, m, wgrid)?, &fit_mask)?;
    let data = MeasuredData::new(packed.values().clone(), Some(wpacked.values().clone()))?;
    let protocol = read_protocol(&resolve(base, &cfg.protocol))?;
    protocol.check(data.n_samples(), m)?;

    let n = data.n_samples();
    let x0 = initial(&cfg, model.as_ref(), n)?;
    let out = resolve(base, &cfg.output);
    fs::create_dir_all(&out)?;
    let report = match cfg.solver {
        FitSolver::Adam => {
            let mut opts = cfg.adam.clone();
            opts.seed = cfg.seed;
            opts.regularizers = cfg.regularizers.iter().map(|r| r.resolve(&fit_mask, base)).collect::<Result<_>>()?;
            let fit = optimize(&x0, &data, &protocol, model.clone(), &opts)?;
            write_param_maps(&out, "", &fit.final_params, &fit_mask, cfg.float)?;
            serde_json::to_string_pretty(&AdamReport {
                solver: "adam",
                iterations_run: fit.iterations_run,
                best_iteration: fit.best_iteration,
                stop_reason: &fit.stop_reason,
                loss_history: &fit.loss_history,
            })?
        }
        FitSolver::Mh | FitSolver::Ensemble => {
            if !cfg.regularizers.is_empty() {
                bail!(Config, "regularizers apply to the adam solver only");
            }
            let mut opts = cfg.mcmc.clone();
            opts.seed = cfg.seed;
            opts.algorithm = if cfg.solver == FitSolver::Mh { samplers::Algorithm::Mh } else { samplers::Algorithm::Ensemble };
            let peak = data.values().as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let noise0 = cfg.noise_init.unwrap_or(0.05 * peak.max(f64::MIN_POSITIVE));
            let x0 = with_noise(&x0, noise0)?;
            let summary = samplers::run(&x0, &data, &protocol, model.clone(), &opts)?;
            let cols = |v: &[Vec<f64>]| v.to_vec();
            let maps = [("", cols(&summary.mean)), ("_std", cols(&summary.std)), ("_mcse", cols(&summary.mcse))];
            for (suffix, fields) in maps {
                for (name, f) in summary.names.iter().zip(fields) {
                    write_field(&out.join(format!("{name}{suffix}.nii")), f, &fit_mask, cfg.float)?;
                }
            }
            if let Some(med) = &summary.median {
                for (name, f) in summary.names.iter().zip(med) {
                    write_field(&out.join(format!("{name}_median.nii")), f.clone(), &fit_mask, cfg.float)?;
                }
            }
            write_field(&out.join("acceptance.nii"), summary.acceptance_rate.clone(), &fit_mask, cfg.float)?;
            let mean_acc = summary.acceptance_rate.iter().sum::<f64>() / n as f64;
            serde_json::to_string_pretty(&serde_json::json!({
                "solver": if cfg.solver == FitSolver::Mh { "mh" } else { "ensemble" },
                "draws_per_sample": summary.draws_per_sample,
                "mean_acceptance": mean_acc,
            }))?
        }
        FitSolver::NllsOracle => {
            if !cfg.regularizers.is_empty() {
                bail!(Config, "regularizers apply to the adam solver only");
            }
            let fit = fit_nlls(model.as_ref(), &data, &protocol, &x0, &cfg.nlls)?;
            write_param_maps(&out, "", &fit.params, &fit_mask, cfg.float)?;
            write_field(&out.join("converged.nii"), fit.converged.iter().map(|&c| c as u8 as f64).collect(), &fit_mask, cfg.float)?;
            write_field(&out.join("cost.nii"), fit.cost.clone(), &fit_mask, cfg.float)?;
            serde_json::to_string_pretty(&serde_json::json!({
                "solver": "nlls_oracle",
                "not_converged": fit.converged.iter().filter(|&&c| !c).count(),
            }))?
        }
    };
    fs::write(out.join("fit.json"), report + "\n")?;
    Ok(())
}

fn write_field(path: &Path, field: Vec<f64>, mask: &Mask, ty: FloatType) -> Result<()> {
    write_nifti(path, &unpack(&Matrix::column(field), mask, 0.0)?, ty)
}

fn initial(cfg: &FitConfig, model: &dyn crate::models::SignalModel, n: usize) -> Result<ParamSet> {
    let names: Vec<String> = model.param_names().into_iter().map(String::from).collect();
    for k in cfg.init.keys().chain(cfg.bounds.keys()) {
        if !names.contains(k) {
            bail!(Config, "unknown parameter '{k}' for model '{}'", cfg.model);
        }
    }
    let mid = start_params(model, n)?;
    let mut lb = model.default_lb();
    let mut ub = model.default_ub();
    let mut fields = Vec::new();
    for (j, name) in names.iter().enumerate() {
        if let Some([l, u]) = cfg.bounds.get(name) {
            lb[j] = *l;
            ub[j] = *u;
        }
        let v = match cfg.init.get(name) {
            Some(v) => *v,
            None if lb[j].is_finite() && ub[j].is_finite() => 0.5 * (lb[j] + ub[j]),
            None => mid.fields()[j][0],
        };
        fields.push(vec![v; n]);
    }
    ParamSet::new(names, fields, lb, ub)
}
