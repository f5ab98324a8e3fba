use rayon::prelude::*;

use super::summary::{Accumulator, PosteriorSummary};
use super::{in_box, LogTarget, McmcOptions, PointEstimate, CHUNK};
use crate::error::{bail, Result};
use crate::rng::Stream;

const SLOT_PARTNER: u64 = 0;
const SLOT_Z: u64 = 1;
const SLOT_ACCEPT: u64 = 2;

/// Stretch factor with density proportional to `1/sqrt(z)` on `[1/a, a]`,
/// by inverse CDF of a uniform draw `u`.
#[inline]
pub fn stretch_z(a: f64, u: f64) -> f64 {
    let v = (a - 1.0) * u + 1.0;
    v * v / a
}

/// Walkers `[n x n_walker x d]` in a Gaussian ball around `x0` with std
/// `1e-3 * (ub - lb)` on free coordinates, clipped to the bounds.
pub fn init_walkers(x0: &[f64], lb: &[f64], ub: &[f64], n_walker: usize, free: &[bool], seed: u64) -> Vec<f64> {
    let d = lb.len();
    let n = x0.len() / d;
    let mut out = vec![0.0; n * n_walker * d];
    for s in 0..n {
        for w in 0..n_walker {
            let st = Stream::new(seed, s as u64, w as u64, 0);
            for k in 0..d {
                let x = x0[s * d + k];
                let v = if free[k] {
                    let width = if lb[k].is_finite() { ub[k] - lb[k] } else { x.abs().max(1.0) };
                    (x + 1e-3 * width * st.normal(k as u64)).clamp(lb[k], ub[k])
                } else {
                    x
                };
                out[(s * n_walker + w) * d + k] = v;
            }
        }
    }
    out
}

struct ChunkOut {
    accs: Vec<Accumulator>,
    accepted: Vec<usize>,
}

/// Affine-invariant ensemble with two alternating half-ensembles; `walkers`
/// holds the initial positions `[n x n_walker x d]`.
pub fn run_ensemble<T: LogTarget + ?Sized>(target: &T, walkers: &[f64], opts: &McmcOptions, free: &[bool]) -> Result<PosteriorSummary> {
    let (n, d) = (target.n_samples(), target.dim());
    opts.validate(d)?;
    let nw = opts.n_walker;
    if walkers.len() != n * nw * d || free.len() != d {
        bail!(Shape, "walkers must be {n} x {nw} x {d}");
    }
    for (i, w) in walkers.chunks(d).enumerate() {
        if !in_box(w, target.lower(), target.upper()) {
            bail!(Domain, "walker {} of sample {} starts outside the bounds", i % nw, i / nw);
        }
    }
    let d_free = free.iter().filter(|&&f| f).count() as f64;
    let half = nw / 2;
    let a = opts.step_size;
    let n_keep = opts.n_keep();
    let keep = opts.keep_samples || opts.point_estimate == PointEstimate::Median;
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let outs: Vec<ChunkOut> = starts
        .par_iter()
        .map(|&s0| {
            let len = CHUNK.min(n - s0);
            let mut state = walkers[s0 * nw * d..(s0 + len) * nw * d].to_vec();
            let all: Vec<usize> = (0..len * nw).map(|r| s0 + r / nw).collect();
            let mut lp = vec![0.0; len * nw];
            target.log_density_batch(&all, &state, &mut lp);
            let rows = len * half;
            let samples: Vec<usize> = (0..rows).map(|r| s0 + r / half).collect();
            let mut prop = vec![0.0; rows * d];
            let mut zs = vec![0.0; rows];
            let mut lp_prop = vec![0.0; rows];
            let mut accs: Vec<Accumulator> = (0..len).map(|_| Accumulator::new(d, n_keep, nw, keep)).collect();
            let mut accepted = vec![0usize; len];
            for t in 1..=opts.iteration {
                for h in 0..2 {
                    let (own, other) = if h == 0 { (0, half) } else { (half, 0) };
                    for r in 0..rows {
                        let (i, k) = (r / half, own + r % half);
                        let st = Stream::new(opts.seed, (s0 + i) as u64, k as u64, t as u64);
                        let j = other + st.index(SLOT_PARTNER, half);
                        let z = stretch_z(a, st.uniform(SLOT_Z));
                        zs[r] = z;
                        let xk = (i * nw + k) * d;
                        let xj = (i * nw + j) * d;
                        for c in 0..d {
                            prop[r * d + c] = if free[c] { state[xj + c] + z * (state[xk + c] - state[xj + c]) } else { state[xk + c] };
                        }
                    }
                    target.log_density_batch(&samples, &prop, &mut lp_prop);
                    for r in 0..rows {
                        let (i, k) = (r / half, own + r % half);
                        let st = Stream::new(opts.seed, (s0 + i) as u64, k as u64, t as u64);
                        let w = i * nw + k;
                        let log_ratio = (d_free - 1.0) * zs[r].ln() + lp_prop[r] - lp[w];
                        if st.uniform(SLOT_ACCEPT).ln() < log_ratio {
                            state[w * d..(w + 1) * d].copy_from_slice(&prop[r * d..(r + 1) * d]);
                            lp[w] = lp_prop[r];
                            accepted[i] += 1;
                        }
                    }
                }
                if let Some(j) = opts.keep_index(t) {
                    for i in 0..len {
                        for k in 0..nw {
                            let w = i * nw + k;
                            accs[i].push(j, &state[w * d..(w + 1) * d]);
                        }
                    }
                }
            }
            ChunkOut { accs, accepted }
        })
        .collect();
    let accs: Vec<Accumulator> = outs.iter().flat_map(|o| o.accs.iter().cloned()).collect();
    let accepted: Vec<usize> = outs.iter().flat_map(|o| o.accepted.iter().copied()).collect();
    Ok(PosteriorSummary::assemble(
        target.names(),
        &accs,
        &accepted,
        opts.iteration * nw,
        opts.point_estimate == PointEstimate::Median,
        opts.keep_samples,
    ))
}
