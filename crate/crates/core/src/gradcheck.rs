//! Reverse-mode gradients against Richardson-extrapolated central differences.
//!
//! Errors are norm-wise per point: `max_j |ad_j - fd_j| / max_j max(|ad_j|, |fd_j|)`.

use std::sync::Arc;

use serde::Serialize;

use crate::autodiff::{Tape, Var};
use crate::error::{bail, Result};
use crate::matrix::Matrix;
use crate::models::SignalModel;
use crate::regularizers::{RegularizerKind, RegularizerSpec};
use crate::rng::Stream;
use crate::volume::{grid_graph, Connectivity, Mask, MeshSpec, Protocol};

#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    pub target: String,
    pub points: usize,
    pub max_rel_err: f64,
}

/// Fourth-order central difference from steps `h` and `h/2`.
fn richardson(f: &dyn Fn(f64) -> Vec<f64>, h: f64) -> Vec<f64> {
    let d = |h: f64| -> Vec<f64> { f(h).iter().zip(f(-h)).map(|(a, b)| (a - b) / (2.0 * h)).collect() };
    let (d1, d2) = (d(h), d(h / 2.0));
    d1.iter().zip(d2).map(|(a, b)| (4.0 * b - a) / 3.0).collect()
}

fn rel_err(ad: &[f64], fd: &[f64]) -> f64 {
    let scale = ad.iter().chain(fd).fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = ad.iter().zip(fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Checks `d/dtheta sum_k w_k S_k(theta)` for `points` random parameter
/// vectors in the inner 90% of the model's bounds, with random positive
/// weights `w`. Every point is one sample of a single batched evaluation.
pub fn check_model(model: &dyn SignalModel, protocol: &Protocol, n_meas: usize, points: usize, seed: u64) -> Result<GradReport> {
    let (lb, ub) = (model.default_lb(), model.default_ub());
    if lb.iter().chain(&ub).any(|v| !v.is_finite()) {
        bail!(Config, "gradient check needs finite bounds for model '{}'", model.name());
    }
    protocol.check(points, n_meas)?;
    let p = lb.len();
    let fields: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..points).map(|s| lb[j] + (ub[j] - lb[j]) * (0.05 + 0.9 * Stream::new(seed, s as u64, j as u64, 0).uniform(0))).collect())
        .collect();
    let w: Vec<f64> = (0..n_meas).map(|k| 0.5 + Stream::new(seed, 0, 1 << 20, k as u64).uniform(0)).collect();
    let wrow = Matrix::row(w);

    let per_sample = |fields: &[Vec<f64>], grad: bool| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let tape = Tape::new();
        let vars: Vec<Var> = fields.iter().map(|f| tape.lift(Matrix::column(f.clone()), grad)).collect::<Result<_>>()?;
        let y = tape.broadcast(model.forward(&tape, &vars, protocol)?, points, n_meas)?;
        let wy = tape.mul(y, tape.constant(wrow.clone())?)?;
        let ls = tape.sum_over_meas(wy);
        let values = tape.value(ls).as_slice().to_vec();
        let mut grads = Vec::new();
        if grad {
            let g = tape.backward(tape.sum_all(ls))?;
            grads = vars.iter().map(|v| g.get(*v).map_or(vec![0.0; points], |m| m.as_slice().to_vec())).collect();
        }
        Ok((values, grads))
    };
    let (_, ad) = per_sample(&fields, true)?;
    let mut fd = vec![vec![0.0; points]; p];
    for j in 0..p {
        let h = 1e-3 * (ub[j] - lb[j]);
        let f = |t: f64| {
            let mut shifted = fields.clone();
            shifted[j].iter_mut().for_each(|v| *v += t);
            per_sample(&shifted, false).map(|r| r.0).unwrap_or_else(|_| vec![f64::NAN; points])
        };
        fd[j] = richardson(&f, h);
    }
    let max_rel_err = (0..points)
        .map(|s| {
            let a: Vec<f64> = (0..p).map(|j| ad[j][s]).collect();
            let f: Vec<f64> = (0..p).map(|j| fd[j][s]).collect();
            rel_err(&a, &f)
        })
        .fold(0.0, f64::max);
    Ok(GradReport { target: model.name().to_string(), points, max_rel_err })
}

/// Checks a regularizer over one field `x` of `n` values in `[0, 1)` per
/// point. Steps shrink below the smallest difference between values (and
/// prior means) so central differences never straddle a kink.
pub fn check_regularizer(label: &str, spec: &RegularizerSpec, n: usize, points: usize, seed: u64) -> Result<GradReport> {
    let names = vec!["x".to_string()];
    spec.validate(&names, n)?;
    let eval = |x: &[f64], grad: bool| -> Result<(f64, Vec<f64>)> {
        let tape = Tape::new();
        let v = tape.lift(Matrix::column(x.to_vec()), grad)?;
        let r = spec.evaluate(&tape, &names, &[v])?;
        let value = tape.scalar_value(r);
        let g = if grad { tape.backward(r)?.get(v).map_or(vec![0.0; n], |m| m.as_slice().to_vec()) } else { Vec::new() };
        Ok((value, g))
    };
    let mut worst = 0.0f64;
    for pt in 0..points {
        let x: Vec<f64> = (0..n).map(|i| Stream::new(seed, i as u64, 0, pt as u64).uniform(0)).collect();
        let (_, ad) = eval(&x, true)?;
        let mut min_gap = f64::INFINITY;
        for i in 0..n {
            for k in i + 1..n {
                min_gap = min_gap.min((x[i] - x[k]).abs());
            }
            if let RegularizerKind::Prior { mu, .. } = &spec.kind {
                min_gap = min_gap.min((x[i] - mu[if mu.len() == 1 { 0 } else { i }]).abs());
            }
        }
        let h = (0.2 * min_gap).min(1e-3);
        let mut fd = vec![0.0; n];
        for i in 0..n {
            let f = |t: f64| {
                let mut y = x.clone();
                y[i] += t;
                vec![eval(&y, false).map_or(f64::NAN, |r| r.0)]
            };
            fd[i] = richardson(&f, h)[0];
        }
        worst = worst.max(rel_err(&ad, &fd));
    }
    Ok(GradReport { target: label.to_string(), points, max_rel_err: worst })
}

/// Every built-in regularizer on small graphs: TV on a 4x4 grid, a 3x3x3
/// grid and a triangulated strip, and a Gaussian prior.
pub fn builtin_regularizers() -> Result<Vec<(String, RegularizerSpec, usize)>> {
    let g2 = grid_graph(&Mask::full([4, 4, 1])?, Connectivity::Grid2D4);
    let g3 = grid_graph(&Mask::full([3, 3, 3])?, Connectivity::Grid3D6);
    let faces: Vec<[usize; 3]> = (0..10).flat_map(|k| [[k, k + 1, k + 12], [k + 1, k + 13, k + 12]]).collect();
    let mesh = MeshSpec { n_vertices: 24, faces: Some(faces), edges: None }.graph()?;
    let mu: Vec<f64> = (0..12).map(|i| 0.1 * i as f64).collect();
    let sigma: Vec<f64> = (0..12).map(|i| 0.2 + 0.05 * i as f64).collect();
    Ok(vec![
        ("tv_grid2d".into(), RegularizerSpec::tv(Arc::new(g2), &["x"], 1.0), 16),
        ("tv_grid3d".into(), RegularizerSpec::tv(Arc::new(g3), &["x"], 1.0), 27),
        ("tv_mesh".into(), RegularizerSpec::tv(Arc::new(mesh), &["x"], 1.0), 24),
        ("prior".into(), RegularizerSpec::prior(mu, sigma, &["x"], 1.0), 12),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{by_name, example_protocol};

    #[test]
    fn richardson_is_fourth_order() {
        let f = |t: f64| vec![(1.0 + t).sin()];
        let d = richardson(&f, 1e-2)[0];
        assert!((d - 1f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn models_pass_small_batch() {
        for name in ["monoexp", "biexp", "smt_ballstick", "identity"] {
            let m = by_name(name).unwrap();
            let r = check_model(m.as_ref(), &example_protocol(m.as_ref()), 8, 10, 1).unwrap();
            assert!(r.max_rel_err < 1e-7, "{name}: {}", r.max_rel_err);
        }
    }

    #[test]
    fn regularizers_pass_small_batch() {
        for (label, spec, n) in builtin_regularizers().unwrap() {
            let r = check_regularizer(&label, &spec, n, 5, 2).unwrap();
            assert!(r.max_rel_err < 1e-7, "{label}: {}", r.max_rel_err);
        }
    }

    #[test]
    fn detects_wrong_gradient() {
        use crate::autodiff::ScalarFn;
        // value x^2 with a deliberately wrong derivative
        let bad: ScalarFn = Arc::new(|x| (x * x, x));
        let hook: crate::regularizers::PenaltyHook = Arc::new(move |t: &Tape, v: &[Var]| Ok(t.sum_all(t.map(v[0], bad.clone()))));
        let spec = RegularizerSpec::custom(hook, &["x"], 1.0);
        let r = check_regularizer("bad", &spec, 4, 2, 3).unwrap();
        assert!(r.max_rel_err > 0.1);
    }
}
