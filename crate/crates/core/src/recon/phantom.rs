use num_complex::Complex64;

use crate::rng::Stream;

/// `(intensity, semi-axis a, semi-axis b, center u, center v, angle in degrees)`
const ELLIPSES: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

fn grid_uv(y: usize, z: usize, ny: usize, nz: usize) -> (f64, f64) {
    ((2 * z + 1) as f64 / nz as f64 - 1.0, 1.0 - (2 * y + 1) as f64 / ny as f64)
}

#[derive(Debug, Clone)]
pub struct PhantomImage {
    /// `[ky][kz][echo]`
    pub image: Vec<Complex64>,
    /// Proton-density-like map `[ky][kz]`.
    pub density: Vec<f64>,
    /// Inside the outer ellipse, `[ky][kz]`.
    pub support: Vec<bool>,
}

/// Shepp-Logan-style multi-echo phantom: `rho * exp(-TE * R2*) * exp(i phi)`
/// with `R2* = 10 + 20 rho` and a gentle linear phase.
pub fn phantom(ny: usize, nz: usize, te: &[f64]) -> PhantomImage {
    let ne = te.len();
    let mut density = vec![0.0; ny * nz];
    let mut support = vec![false; ny * nz];
    for y in 0..ny {
        for z in 0..nz {
            let (u, v) = grid_uv(y, z, ny, nz);
            for (k, e) in ELLIPSES.iter().enumerate() {
                let (s, c) = e[5].to_radians().sin_cos();
                let du = u - e[3];
                let dv = v - e[4];
                let ru = (du * c + dv * s) / e[1];
                let rv = (-du * s + dv * c) / e[2];
                if ru * ru + rv * rv <= 1.0 {
                    density[y * nz + z] += e[0];
                    if k == 0 {
                        support[y * nz + z] = true;
                    }
                }
            }
        }
    }
    let mut image = vec![Complex64::new(0.0, 0.0); ny * nz * ne];
    for y in 0..ny {
        for z in 0..nz {
            let rho = density[y * nz + z];
            let (u, v) = grid_uv(y, z, ny, nz);
            let phase = Complex64::from_polar(1.0, 0.3 * u + 0.2 * v);
            for (e, t) in te.iter().enumerate() {
                image[(y * nz + z) * ne + e] = phase * (rho * (-t * (10.0 + 20.0 * rho)).exp());
            }
        }
    }
    PhantomImage { image, density, support }
}

/// Smooth complex Gaussian-bump sensitivities around the field of view,
/// normalized so that `sum_c |C_c|^2 = 1` at every pixel. Layout `[ky][kz][coil]`.
pub fn coil_maps(ny: usize, nz: usize, nc: usize) -> Vec<Complex64> {
    let mut maps = vec![Complex64::new(0.0, 0.0); ny * nz * nc];
    for y in 0..ny {
        for z in 0..nz {
            let (u, v) = grid_uv(y, z, ny, nz);
            let p = y * nz + z;
            for c in 0..nc {
                let ang = std::f64::consts::TAU * c as f64 / nc as f64;
                let (cu, cv) = (1.2 * ang.cos(), 1.2 * ang.sin());
                let d2 = (u - cu).powi(2) + (v - cv).powi(2);
                maps[p * nc + c] = Complex64::from_polar((-d2 / (2.0 * 0.8 * 0.8)).exp(), ang + 0.5 * u);
            }
            let s = (0..nc).map(|c| maps[p * nc + c].norm_sqr()).sum::<f64>().sqrt();
            for c in 0..nc {
                maps[p * nc + c] /= s;
            }
        }
    }
    maps
}

/// Adds complex Gaussian noise (std `sigma` per real component) to sampled
/// entries; `mask` is `[ky][kz][echo]`, k-space `[ky][kz][coil][echo]`.
pub fn add_kspace_noise(kspace: &mut [Complex64], mask: &[bool], dims: [usize; 4], sigma: f64, seed: u64) {
    let [_, _, nc, ne] = dims;
    for (i, v) in kspace.iter_mut().enumerate() {
        let p = i / (nc * ne);
        if mask[p * ne + i % ne] {
            let st = Stream::new(seed, i as u64, 0, 0);
            *v += Complex64::new(sigma * st.normal(0), sigma * st.normal(1));
        }
    }
}
