use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::autodiff::LinearOperator;
use crate::error::{bail, Result};
use crate::reduce::pairwise_sum_by;

/// Multi-coil encoding `k[c,e] = M_e * DFT2(C_c * I_e)` with a unitary 2D
/// DFT (origin at index 0, no shift).
///
/// Layouts are row-major: image `[ky][kz][echo]`, k-space
/// `[ky][kz][coil][echo]`, coil maps `[ky][kz][coil]`, mask `[ky][kz][echo]`.
pub struct Encoding {
    pub ny: usize,
    pub nz: usize,
    pub nc: usize,
    pub ne: usize,
    coils: Vec<Complex64>,
    mask: Vec<bool>,
    fwd_y: Arc<dyn Fft<f64>>,
    fwd_z: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    inv_z: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Encoding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Encoding({}x{}, {} coils, {} echoes)", self.ny, self.nz, self.nc, self.ne)
    }
}

impl Encoding {
    pub fn new(dims: [usize; 4], coils: Vec<Complex64>, mask: Vec<bool>) -> Result<Self> {
        let [ny, nz, nc, ne] = dims;
        if dims.contains(&0) {
            bail!(Shape, "encoding dims must be >= 1, got {dims:?}");
        }
        if coils.len() != ny * nz * nc {
            bail!(Shape, "coil maps have {} entries, expected {}", coils.len(), ny * nz * nc);
        }
        if mask.len() != ny * nz * ne {
            bail!(Shape, "sampling mask has {} entries, expected {}", mask.len(), ny * nz * ne);
        }
        if coils.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            bail!(Data, "coil maps contain non-finite values");
        }
        for e in 0..ne {
            if !(0..ny * nz).any(|p| mask[p * ne + e]) {
                bail!(Data, "echo {e} has no sampled k-space location");
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            ny,
            nz,
            nc,
            ne,
            coils,
            mask,
            fwd_y: planner.plan_fft_forward(ny),
            fwd_z: planner.plan_fft_forward(nz),
            inv_y: planner.plan_fft_inverse(ny),
            inv_z: planner.plan_fft_inverse(nz),
        })
    }

    pub fn image_len(&self) -> usize {
        self.ny * self.nz * self.ne
    }

    pub fn kspace_len(&self) -> usize {
        self.ny * self.nz * self.nc * self.ne
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn coils(&self) -> &[Complex64] {
        &self.coils
    }

    /// Number of sampled k-space entries over all coils.
    pub fn n_sampled(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count() * self.nc
    }

    fn dft2(&self, plane: &mut [Complex64], forward: bool) {
        let (ny, nz) = (self.ny, self.nz);
        let (fy, fz) = if forward { (&self.fwd_y, &self.fwd_z) } else { (&self.inv_y, &self.inv_z) };
        for row in plane.chunks_mut(nz) {
            fz.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); ny];
        for z in 0..nz {
            for y in 0..ny {
                col[y] = plane[y * nz + z];
            }
            fy.process(&mut col);
            for y in 0..ny {
                plane[y * nz + z] = col[y];
            }
        }
        let s = 1.0 / ((ny * nz) as f64).sqrt();
        for v in plane.iter_mut() {
            *v *= s;
        }
    }

    pub fn encode(&self, image: &[Complex64]) -> Result<Vec<Complex64>> {
        if image.len() != self.image_len() {
            bail!(Shape, "image has {} entries, expected {}", image.len(), self.image_len());
        }
        let (ny, nz, nc, ne) = (self.ny, self.nz, self.nc, self.ne);
        let planes: Vec<Vec<Complex64>> = (0..nc * ne)
            .into_par_iter()
            .map(|ce| {
                let (c, e) = (ce / ne, ce % ne);
                let mut plane: Vec<Complex64> = (0..ny * nz).map(|p| self.coils[p * nc + c] * image[p * ne + e]).collect();
                self.dft2(&mut plane, true);
                for (p, v) in plane.iter_mut().enumerate() {
                    if !self.mask[p * ne + e] {
                        *v = Complex64::new(0.0, 0.0);
                    }
                }
                plane
            })
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); self.kspace_len()];
        for (ce, plane) in planes.iter().enumerate() {
            let (c, e) = (ce / ne, ce % ne);
            for p in 0..ny * nz {
                out[(p * nc + c) * ne + e] = plane[p];
            }
        }
        Ok(out)
    }

    pub fn adjoint(&self, kspace: &[Complex64]) -> Result<Vec<Complex64>> {
        if kspace.len() != self.kspace_len() {
            bail!(Shape, "k-space has {} entries, expected {}", kspace.len(), self.kspace_len());
        }
        let (ny, nz, nc, ne) = (self.ny, self.nz, self.nc, self.ne);
        let planes: Vec<Vec<Complex64>> = (0..nc * ne)
            .into_par_iter()
            .map(|ce| {
                let (c, e) = (ce / ne, ce % ne);
                let mut plane: Vec<Complex64> = (0..ny * nz)
                    .map(|p| if self.mask[p * ne + e] { kspace[(p * nc + c) * ne + e] } else { Complex64::new(0.0, 0.0) })
                    .collect();
                self.dft2(&mut plane, false);
                for (p, v) in plane.iter_mut().enumerate() {
                    *v *= self.coils[p * nc + c].conj();
                }
                plane
            })
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); self.image_len()];
        for p in 0..ny * nz {
            for e in 0..ne {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..nc {
                    acc += planes[c * ne + e][p];
                }
                out[p * ne + e] = acc;
            }
        }
        Ok(out)
    }

    /// `E^H E x + lambda x`.
    pub fn normal(&self, x: &[Complex64], lambda: f64) -> Result<Vec<Complex64>> {
        let mut y = self.adjoint(&self.encode(x)?)?;
        if lambda != 0.0 {
            for (v, xi) in y.iter_mut().zip(x) {
                *v += xi * lambda;
            }
        }
        Ok(y)
    }
}

/// `Re <a, b>` with a fixed summation tree.
pub fn dot_re(a: &[Complex64], b: &[Complex64]) -> f64 {
    pairwise_sum_by(a.len(), &|i| a[i].re * b[i].re + a[i].im * b[i].im)
}

/// Full complex inner product `sum conj(a) * b`.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let re = pairwise_sum_by(a.len(), &|i| (a[i].conj() * b[i]).re);
    let im = pairwise_sum_by(a.len(), &|i| (a[i].conj() * b[i]).im);
    Complex64::new(re, im)
}

pub fn norm(a: &[Complex64]) -> f64 {
    dot_re(a, a).sqrt()
}

/// Stacks real and imaginary parts as `[re; im]`.
pub fn split(v: &[Complex64]) -> Vec<f64> {
    v.iter().map(|c| c.re).chain(v.iter().map(|c| c.im)).collect()
}

pub fn join(v: &[f64]) -> Vec<Complex64> {
    let n = v.len() / 2;
    (0..n).map(|i| Complex64::new(v[i], v[n + i])).collect()
}

/// The encoding as a real operator on `[re; im]` stacks.
pub struct RealEncoding(pub Arc<Encoding>);

impl LinearOperator for RealEncoding {
    fn input_len(&self) -> usize {
        2 * self.0.image_len()
    }

    fn output_len(&self) -> usize {
        2 * self.0.kspace_len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        split(&self.0.encode(&join(x)).expect("image length checked by tape"))
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        split(&self.0.adjoint(&join(y)).expect("k-space length checked by tape"))
    }
}
