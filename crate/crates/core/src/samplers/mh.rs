use rayon::prelude::*;

use super::summary::{Accumulator, PosteriorSummary};
use super::{in_box, LogTarget, McmcOptions, PointEstimate, CHUNK};
use crate::error::{bail, Result};
use crate::rng::Stream;

fn check_init<T: LogTarget + ?Sized>(target: &T, init: &[f64], step: &[f64], free: &[bool]) -> Result<()> {
    let (n, d) = (target.n_samples(), target.dim());
    if init.len() != n * d || step.len() != d || free.len() != d {
        bail!(Shape, "initial states, steps and free mask must match {n} samples x {d} parameters");
    }
    for s in 0..n {
        if !in_box(&init[s * d..(s + 1) * d], target.lower(), target.upper()) {
            bail!(Domain, "initial state of sample {s} is outside the bounds");
        }
    }
    Ok(())
}

#[inline]
fn propose(stream: &Stream, theta: &[f64], step: &[f64], free: &[bool], out: &mut [f64]) {
    for k in 0..theta.len() {
        out[k] = if free[k] { theta[k] + step[k] * stream.normal(k as u64) } else { theta[k] };
    }
}

#[inline]
fn accept_slot(d: usize) -> u64 {
    2 * d as u64
}

struct ChunkOut {
    accs: Vec<Accumulator>,
    accepted: Vec<usize>,
}

/// Lockstep Metropolis-Hastings; samples advance together in chunks with
/// batched density evaluation.
pub fn run_mh<T: LogTarget + ?Sized>(target: &T, init: &[f64], opts: &McmcOptions, step: &[f64], free: &[bool]) -> Result<PosteriorSummary> {
    let d = target.dim();
    opts.validate(d)?;
    check_init(target, init, step, free)?;
    let n = target.n_samples();
    let reps = opts.repetition;
    let n_keep = opts.n_keep();
    let keep = opts.keep_samples || opts.point_estimate == PointEstimate::Median;
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let outs: Vec<ChunkOut> = starts
        .par_iter()
        .map(|&s0| {
            let len = CHUNK.min(n - s0);
            let rows = len * reps;
            let samples: Vec<usize> = (0..reps).flat_map(|_| s0..s0 + len).collect();
            let mut state: Vec<f64> = (0..reps).flat_map(|_| init[s0 * d..(s0 + len) * d].iter().copied()).collect();
            let mut lp = vec![0.0; rows];
            target.log_density_batch(&samples, &state, &mut lp);
            let mut prop = vec![0.0; rows * d];
            let mut lp_prop = vec![0.0; rows];
            let mut accs: Vec<Accumulator> = (0..len).map(|_| Accumulator::new(d, n_keep, reps, keep)).collect();
            let mut accepted = vec![0usize; len];
            for t in 1..=opts.iteration {
                for r in 0..rows {
                    let st = Stream::new(opts.seed, samples[r] as u64, (r / len) as u64, t as u64);
                    propose(&st, &state[r * d..(r + 1) * d], step, free, &mut prop[r * d..(r + 1) * d]);
                }
                target.log_density_batch(&samples, &prop, &mut lp_prop);
                for r in 0..rows {
                    let st = Stream::new(opts.seed, samples[r] as u64, (r / len) as u64, t as u64);
                    if st.uniform(accept_slot(d)).ln() < lp_prop[r] - lp[r] {
                        state[r * d..(r + 1) * d].copy_from_slice(&prop[r * d..(r + 1) * d]);
                        lp[r] = lp_prop[r];
                        accepted[r % len] += 1;
                    }
                }
                if let Some(j) = opts.keep_index(t) {
                    for i in 0..len {
                        for rep in 0..reps {
                            let r = rep * len + i;
                            accs[i].push(j, &state[r * d..(r + 1) * d]);
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
        opts.iteration * reps,
        opts.point_estimate == PointEstimate::Median,
        opts.keep_samples,
    ))
}

/// One sample at a time, one step at a time; the reference the lockstep
/// sampler must reproduce bit for bit.
pub fn run_mh_reference<T: LogTarget + ?Sized>(target: &T, init: &[f64], opts: &McmcOptions, step: &[f64], free: &[bool]) -> Result<PosteriorSummary> {
    let d = target.dim();
    opts.validate(d)?;
    check_init(target, init, step, free)?;
    let n = target.n_samples();
    let reps = opts.repetition;
    let keep = opts.keep_samples || opts.point_estimate == PointEstimate::Median;
    let mut accs = Vec::with_capacity(n);
    let mut accepted = vec![0usize; n];
    let mut prop = vec![0.0; d];
    for s in 0..n {
        let mut acc = Accumulator::new(d, opts.n_keep(), reps, keep);
        let mut chains: Vec<Vec<f64>> = vec![init[s * d..(s + 1) * d].to_vec(); reps];
        let mut lp: Vec<f64> = chains.iter().map(|c| target.log_density(s, c)).collect();
        for t in 1..=opts.iteration {
            for r in 0..reps {
                let st = Stream::new(opts.seed, s as u64, r as u64, t as u64);
                propose(&st, &chains[r], step, free, &mut prop);
                let lq = target.log_density(s, &prop);
                if st.uniform(accept_slot(d)).ln() < lq - lp[r] {
                    chains[r].copy_from_slice(&prop);
                    lp[r] = lq;
                    accepted[s] += 1;
                }
            }
            if let Some(j) = opts.keep_index(t) {
                for c in &chains {
                    acc.push(j, c);
                }
            }
        }
        accs.push(acc);
    }
    Ok(PosteriorSummary::assemble(
        target.names(),
        &accs,
        &accepted,
        opts.iteration * reps,
        opts.point_estimate == PointEstimate::Median,
        opts.keep_samples,
    ))
}
