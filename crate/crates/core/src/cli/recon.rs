use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;

use super::resolve;
use crate::error::{bail, Result};
use crate::io::{read_complex_nifti, read_complex_raw, read_nifti, write_complex_nifti, FloatType};
use crate::recon::{add_kspace_noise, caipi_mask, coil_maps, nrmse, phantom, recon_gd, recon_lsqr, Encoding, ReconOptions, ReconProblem};

/// Complex input as a raw complex64 file with sidecar or a NIfTI pair.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ComplexSource {
    Raw { raw: PathBuf },
    Pair { re: PathBuf, im: PathBuf },
}

impl ComplexSource {
    fn read(&self, base: &Path) -> Result<([usize; 4], Vec<Complex64>)> {
        match self {
            ComplexSource::Raw { raw } => read_complex_raw(&resolve(base, raw)),
            ComplexSource::Pair { re, im } => read_complex_nifti(&resolve(base, re), &resolve(base, im)),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct PhantomConfig {
    pub ny: usize,
    pub nz: usize,
    pub coils: usize,
    pub rz: usize,
    #[serde(default)]
    pub z_shift: usize,
    #[serde(default)]
    pub te_shift: usize,
    pub te: Vec<f64>,
    /// k-space noise std per real component.
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReconMethod {
    #[default]
    Lsqr,
    Gd,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconConfig {
    /// k-space `[ky, kz, coil, echo]`.
    #[serde(default)]
    pub kspace: Option<ComplexSource>,
    /// Coil maps `[ky, kz, coil]`.
    #[serde(default)]
    pub coils: Option<ComplexSource>,
    /// Sampling pattern `[ky, kz, echo]`; non-zero k-space marks it otherwise.
    #[serde(default)]
    pub sampling: Option<PathBuf>,
    /// Synthetic data instead of files.
    #[serde(default)]
    pub phantom: Option<PhantomConfig>,
    #[serde(default)]
    pub method: ReconMethod,
    /// Tikhonov weight for `lsqr`.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub gd: ReconOptions,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
    #[serde(default)]
    pub float: FloatType,
}

fn default_tol() -> f64 {
    1e-10
}

pub fn recon_cmd(cfg: ReconConfig, base: &Path) -> Result<()> {
    let (problem, truth) = match (&cfg.phantom, &cfg.kspace, &cfg.coils) {
        (Some(p), None, None) => {
            let ne = p.te.len();
            let dims = [p.ny, p.nz, p.coils, ne];
            let ph = phantom(p.ny, p.nz, &p.te);
            let mask = caipi_mask(p.ny, p.nz, p.rz, p.z_shift, p.te_shift, ne)?;
            let enc = Encoding::new(dims, coil_maps(p.ny, p.nz, p.coils), mask.clone())?;
            let mut k = enc.encode(&ph.image)?;
            if p.noise > 0.0 {
                add_kspace_noise(&mut k, &mask, dims, p.noise, cfg.seed);
            }
            (ReconProblem::new(dims, k, enc.coils().to_vec(), mask)?, Some(ph.image))
        }
        (None, Some(ks), Some(cs)) => {
            let (dims, k) = ks.read(base)?;
            let (cdims, c) = cs.read(base)?;
            // coil maps may come as [ky, kz, coil] (NIfTI) or [ky, kz, coil, 1] (raw)
            if cdims[0] != dims[0] || cdims[1] != dims[1] || cdims[2] * cdims[3] != dims[2] {
                bail!(Shape, "coil maps {cdims:?} do not match k-space {dims:?}");
            }
            let (ny, nz, nc, ne) = (dims[0], dims[1], dims[2], dims[3]);
            let mask = match &cfg.sampling {
                Some(p) => {
                    let s = read_nifti(&resolve(base, p))?;
                    if s.data.len() != ny * nz * ne {
                        bail!(Shape, "sampling pattern has {} cells, k-space needs {}", s.data.len(), ny * nz * ne);
                    }
                    s.data.iter().map(|&v| v != 0.0).collect()
                }
                None => (0..ny * nz * ne)
                    .map(|i| {
                        let (p, e) = (i / ne, i % ne);
                        (0..nc).any(|c| k[(p * nc + c) * ne + e] != Complex64::new(0.0, 0.0))
                    })
                    .collect(),
            };
            (ReconProblem::new(dims, k, c, mask)?, None)
        }
        _ => bail!(Config, "recon needs either 'phantom' or both 'kspace' and 'coils'"),
    };
    let enc = problem.encoding.clone();
    let (image, mut report) = match cfg.method {
        ReconMethod::Lsqr => {
            let r = recon_lsqr(&problem, cfg.lambda, cfg.tol)?;
            let rep = serde_json::json!({"method": "lsqr", "iterations": r.iterations, "converged": r.converged, "residual": r.residual});
            (r.image, rep)
        }
        ReconMethod::Gd => {
            let r = recon_gd(&problem, &cfg.gd)?;
            let rep = serde_json::json!({"method": "gd", "iterations": r.fit.iterations_run, "stop_reason": r.fit.stop_reason, "final_loss": r.fit.loss_history.last()});
            (r.image, rep)
        }
    };
    if let Some(t) = truth {
        report["nrmse_vs_truth"] = nrmse(&image, &t).into();
        report["nrmse_zero_filled"] = nrmse(&problem.zero_filled(), &t).into();
    }
    let out = resolve(base, &cfg.output);
    fs::create_dir_all(&out)?;
    write_complex_nifti(&out.join("image_re.nii"), &out.join("image_im.nii"), [enc.ny, enc.nz, 1, enc.ne], &image, cfg.float)?;
    fs::write(out.join("recon.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(())
}
