//! Model-based reconstruction of undersampled multi-coil, multi-echo 2D
//! k-space.
//!
//! Complex images are optimized as separate real and imaginary fields so the
//! real-valued tape and solver apply unchanged.

mod operator;
mod phantom;

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{bail, Result};
use crate::matrix::Matrix;
use crate::regularizers::tv_graph;
use crate::solver::{optimize_objective, FitResult, LossFunction, Objective, SolverOptions};
use crate::volume::{grid_graph, Connectivity, Mask, NeighborGraph, ParamSet};

pub use operator::{dot, dot_re, join, norm, split, Encoding, RealEncoding};
pub use phantom::{add_kspace_noise, coil_maps, phantom, PhantomImage};

/// One slice of undersampled multi-coil, multi-echo k-space.
#[derive(Debug)]
pub struct ReconProblem {
    pub encoding: Arc<Encoding>,
    /// `[ky][kz][coil][echo]`; unsampled entries are ignored.
    pub kspace: Vec<Complex64>,
}

impl ReconProblem {
    pub fn new(dims: [usize; 4], kspace: Vec<Complex64>, coils: Vec<Complex64>, mask: Vec<bool>) -> Result<Self> {
        let encoding = Encoding::new(dims, coils, mask)?;
        if kspace.len() != encoding.kspace_len() {
            bail!(Shape, "k-space has {} entries, expected {}", kspace.len(), encoding.kspace_len());
        }
        if kspace.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            bail!(Data, "k-space contains non-finite values");
        }
        Ok(Self { encoding: Arc::new(encoding), kspace })
    }

    /// Zero-filled coil-combined image `E^H k`.
    pub fn zero_filled(&self) -> Vec<Complex64> {
        self.encoding.adjoint(&self.kspace).expect("k-space length checked")
    }

    /// 4-neighbor graph within each echo over the `[ky][kz][echo]` layout.
    pub fn image_graph(&self) -> NeighborGraph {
        let e = &self.encoding;
        let mask = Mask::full([e.ny, e.nz, e.ne]).expect("non-empty dims");
        grid_graph(&mask, Connectivity::Grid2D4)
    }
}

/// Sampled iff `(kz + z_shift * ky + te_shift * echo) mod rz == 0`; layout
/// `[ky][kz][echo]`.
pub fn caipi_mask(ny: usize, nz: usize, rz: usize, z_shift: usize, te_shift: usize, n_echo: usize) -> Result<Vec<bool>> {
    if rz < 1 {
        bail!(Config, "acceleration Rz must be >= 1");
    }
    let mut m = vec![false; ny * nz * n_echo];
    for y in 0..ny {
        for z in 0..nz {
            for e in 0..n_echo {
                m[(y * nz + z) * n_echo + e] = (z + z_shift * y + te_shift * e).is_multiple_of(rz);
            }
        }
    }
    Ok(m)
}

/// `||x - reference|| / ||reference||`.
pub fn nrmse(x: &[Complex64], reference: &[Complex64]) -> f64 {
    let diff: Vec<Complex64> = x.iter().zip(reference).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(reference)
}

#[derive(Debug, Clone)]
pub struct LsqrResult {
    pub image: Vec<Complex64>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative normal-equation residual of the returned iterate.
    pub residual: f64,
}

pub const LSQR_MAX_ITER: usize = 500;

/// Minimizes `||k - E I||^2 + lambda ||I||^2` by conjugate gradients on the
/// normal equations, starting from zero.
pub fn recon_lsqr(problem: &ReconProblem, lambda: f64, tol: f64) -> Result<LsqrResult> {
    if !(lambda >= 0.0) {
        bail!(Config, "Tikhonov weight must be >= 0");
    }
    let enc = &problem.encoding;
    let b = problem.zero_filled();
    let bnorm = norm(&b);
    let n = b.len();
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    if bnorm == 0.0 {
        return Ok(LsqrResult { image: x, iterations: 0, converged: true, residual: 0.0 });
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot_re(&r, &r);
    let mut best = (1.0, x.clone());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < LSQR_MAX_ITER {
        iterations += 1;
        let ap = enc.normal(&p, lambda)?;
        let pap = dot_re(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let rr_new = dot_re(&r, &r);
        let rel = rr_new.sqrt() / bnorm;
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if rel < tol {
            converged = true;
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + p[i] * beta;
        }
    }
    Ok(LsqrResult { image: best.1, iterations, converged, residual: best.0 })
}

/// Data fidelity on `[re; im]` plus anisotropic TV of both parts.
struct ReconObjective {
    op: Arc<RealEncoding>,
    measured: Matrix,
    n_active: f64,
    loss: LossFunction,
    lambda_tv: f64,
    graph: NeighborGraph,
}

impl ReconObjective {
    fn data_term(&self, tape: &Tape, params: &[Var]) -> Result<Var> {
        let x = tape.concat_rows(&[params[0], params[1]])?;
        let k = tape.linear(x, self.op.clone())?;
        let resid = tape.sub(tape.constant(self.measured.clone())?, k)?;
        let norm = match self.loss {
            LossFunction::L1 => tape.sum_all(tape.abs(resid)),
            LossFunction::L2 => tape.sum_all(tape.square(resid)),
        };
        Ok(tape.scale(norm, 1.0 / self.n_active))
    }
}

impl Objective for ReconObjective {
    fn loss(&self, tape: &Tape, params: &[Var]) -> Result<Var> {
        let data = self.data_term(tape, params)?;
        if self.lambda_tv == 0.0 {
            return Ok(data);
        }
        let tv = tape.add(tv_graph(tape, params[0], &self.graph)?, tv_graph(tape, params[1], &self.graph)?)?;
        tape.add(data, tape.scale(tv, self.lambda_tv))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct ReconOptions {
    pub loss: LossFunction,
    pub lambda_tv: f64,
    pub solver: SolverOptions,
}

impl Default for ReconOptions {
    fn default() -> Self {
        Self {
            loss: LossFunction::L2,
            lambda_tv: 0.0,
            solver: SolverOptions { iteration: 500, initial_learn_rate: 0.01, tol: 0.0, convergence_value: 0.0, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReconResult {
    pub image: Vec<Complex64>,
    pub fit: FitResult,
}

/// Gradient-descent reconstruction initialized from the zero-filled image.
pub fn recon_gd(problem: &ReconProblem, options: &ReconOptions) -> Result<ReconResult> {
    if !(options.lambda_tv >= 0.0) {
        bail!(Config, "TV weight must be >= 0");
    }
    let enc = problem.encoding.clone();
    let mut measured = problem.kspace.clone();
    for (i, v) in measured.iter_mut().enumerate() {
        let p = i / (enc.nc * enc.ne);
        if !enc.mask()[p * enc.ne + i % enc.ne] {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    let objective = ReconObjective {
        op: Arc::new(RealEncoding(enc.clone())),
        measured: Matrix::column(split(&measured)),
        n_active: (2 * enc.n_sampled()) as f64,
        loss: options.loss,
        lambda_tv: options.lambda_tv,
        graph: problem.image_graph(),
    };
    let x0 = problem.zero_filled();
    let inf = f64::INFINITY;
    let init = ParamSet::new(
        vec!["re".into(), "im".into()],
        vec![x0.iter().map(|c| c.re).collect(), x0.iter().map(|c| c.im).collect()],
        vec![-inf, -inf],
        vec![inf, inf],
    )?;
    let fit = optimize_objective(&init, &objective, &options.solver)?;
    let re = fit.final_params.field("re")?;
    let im = fit.final_params.field("im")?;
    let image = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
    Ok(ReconResult { image, fit })
}

/// Edge-mean TV of real plus imaginary parts, as penalized by [`recon_gd`].
pub fn image_tv(problem: &ReconProblem, image: &[Complex64]) -> Result<f64> {
    let g = problem.image_graph();
    let tape = Tape::new();
    let re = tape.constant(Matrix::column(image.iter().map(|c| c.re).collect()))?;
    let im = tape.constant(Matrix::column(image.iter().map(|c| c.im).collect()))?;
    let tv = tape.add(tv_graph(&tape, re, &g)?, tv_graph(&tape, im, &g)?)?;
    Ok(tape.scalar_value(tv))
}

#[cfg(test)]
mod tests;
