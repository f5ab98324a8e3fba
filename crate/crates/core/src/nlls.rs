//! Per-sample bounded Levenberg-Marquardt, used as a reference fitter.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::models::{check_params, SignalModel};
use crate::volume::{MeasuredData, ParamSet, Protocol};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct NllsOptions {
    pub max_iter: usize,
    /// Relative cost decrease below which a step counts as converged.
    pub ftol: f64,
    pub xtol: f64,
    /// Extra starts at `lb + 0.25 w` and `lb + 0.75 w` for bounded params.
    pub multi_start: bool,
}

impl Default for NllsOptions {
    fn default() -> Self {
        Self { max_iter: 200, ftol: 1e-12, xtol: 1e-10, multi_start: true }
    }
}

#[derive(Debug, Clone)]
pub struct NllsResult {
    pub params: ParamSet,
    /// Half the weighted residual sum of squares per sample.
    pub cost: Vec<f64>,
    pub converged: Vec<bool>,
}

struct Problem<'a> {
    model: &'a dyn SignalModel,
    protocol: &'a Protocol,
    sample: usize,
    y: &'a [f64],
    sw: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl Problem<'_> {
    fn residual(&self, x: &[f64], r: &mut [f64]) -> Result<f64> {
        self.model.predict_sample(x, self.protocol, self.sample, r)?;
        let mut c = 0.0;
        for k in 0..r.len() {
            r[k] = self.sw[k] * (r[k] - self.y[k]);
            c += r[k] * r[k];
        }
        Ok(if c.is_finite() { 0.5 * c } else { f64::INFINITY })
    }

    fn jacobian(&self, x: &[f64], r0: &[f64]) -> Result<DMatrix<f64>> {
        let m = r0.len();
        let mut j = DMatrix::zeros(m, x.len());
        let mut xp = x.to_vec();
        let mut r = vec![0.0; m];
        for i in 0..x.len() {
            let mut h = 1e-7 * x[i].abs().max(1.0);
            if x[i] + h > self.ub[i] {
                h = -h;
            }
            xp[i] = x[i] + h;
            self.residual(&xp, &mut r)?;
            for k in 0..m {
                j[(k, i)] = (r[k] - r0[k]) / h;
            }
            xp[i] = x[i];
        }
        Ok(j)
    }

    fn solve(&self, x0: &[f64], opts: &NllsOptions) -> Result<(Vec<f64>, f64, bool)> {
        let m = self.y.len();
        let mut x: Vec<f64> = x0.iter().zip(self.lb.iter().zip(&self.ub)).map(|(v, (l, u))| v.clamp(*l, *u)).collect();
        let mut r = vec![0.0; m];
        let mut cost = self.residual(&x, &mut r)?;
        if !cost.is_finite() {
            return Ok((x, cost, false));
        }
        let mut lambda = 1e-3;
        let mut trial = vec![0.0; m];
        for _ in 0..opts.max_iter {
            let j = self.jacobian(&x, &r)?;
            let jtj = j.transpose() * &j;
            let g = j.transpose() * DVector::from_column_slice(&r);
            if g.amax() == 0.0 {
                return Ok((x, cost, true));
            }
            loop {
                let mut a = jtj.clone();
                for i in 0..x.len() {
                    a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
                }
                let step = a.lu().solve(&(-&g));
                let Some(step) = step else {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        return Ok((x, cost, false));
                    }
                    continue;
                };
                let xn: Vec<f64> = (0..x.len()).map(|i| (x[i] + step[i]).clamp(self.lb[i], self.ub[i])).collect();
                let cn = self.residual(&xn, &mut trial)?;
                if cn <= cost {
                    let dx = xn.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    let xn_norm = xn.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let df = cost - cn;
                    x = xn;
                    std::mem::swap(&mut r, &mut trial);
                    cost = cn;
                    lambda = (lambda / 10.0).max(1e-12);
                    if df <= opts.ftol * cost.max(f64::MIN_POSITIVE) || dx <= opts.xtol * (xn_norm + opts.xtol) {
                        return Ok((x, cost, true));
                    }
                    break;
                }
                lambda *= 10.0;
                if lambda > 1e16 {
                    // no descent direction left at this resolution
                    return Ok((x, cost, true));
                }
            }
        }
        Ok((x, cost, false))
    }
}

/// Fits every sample independently, in parallel. Bounds come from `x0`.
pub fn fit_nlls(model: &dyn SignalModel, data: &MeasuredData, protocol: &Protocol, x0: &ParamSet, opts: &NllsOptions) -> Result<NllsResult> {
    check_params(model, x0)?;
    let n = data.n_samples();
    if x0.n_samples() != n {
        bail!(Shape, "initial guess has {} samples, data has {n}", x0.n_samples());
    }
    let m = data.n_meas();
    protocol.check(n, m)?;
    let p = model.params().len();
    let (lb, ub) = (x0.lb()[..p].to_vec(), x0.ub()[..p].to_vec());
    let starts_extra: Vec<Vec<f64>> = if opts.multi_start && lb.iter().chain(&ub).all(|v| v.is_finite()) {
        [0.25, 0.75].iter().map(|f| lb.iter().zip(&ub).map(|(l, u)| l + f * (u - l)).collect()).collect()
    } else {
        Vec::new()
    };
    let out: Vec<(Vec<f64>, f64, bool)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let sw = match data.weights() {
                Some(w) => w.row_slice(s).iter().map(|v| v.sqrt()).collect(),
                None => vec![1.0; m],
            };
            let prob = Problem { model, protocol, sample: s, y: data.values().row_slice(s), sw, lb: lb.clone(), ub: ub.clone() };
            let first = x0.sample(s)[..p].to_vec();
            let mut best = prob.solve(&first, opts)?;
            for st in &starts_extra {
                let cand = prob.solve(st, opts)?;
                if cand.1 < best.1 {
                    best = cand;
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let mut fields = vec![vec![0.0; n]; p];
    let mut cost = Vec::with_capacity(n);
    let mut converged = Vec::with_capacity(n);
    for (s, (x, c, ok)) in out.into_iter().enumerate() {
        for j in 0..p {
            fields[j][s] = x[j];
        }
        cost.push(c);
        converged.push(ok);
    }
    let names = x0.names()[..p].to_vec();
    Ok(NllsResult { params: ParamSet::new(names, fields, lb, ub)?, cost, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{predict, MonoExponential};
    use crate::Matrix;

    fn setup(n: usize) -> (MonoExponential, Protocol, ParamSet, MeasuredData) {
        let m = MonoExponential::default();
        let te: Vec<f64> = (0..8).map(|k| 0.003 + 0.005 * k as f64).collect();
        let prot = Protocol::new().with_row("TE_s", te).unwrap();
        let s0: Vec<f64> = (0..n).map(|s| 0.5 + 0.3 * s as f64).collect();
        let r2: Vec<f64> = (0..n).map(|s| 5.0 + 4.0 * s as f64).collect();
        let truth = ParamSet::new(m.param_names().iter().map(|s| s.to_string()).collect(), vec![s0, r2], m.default_lb(), m.default_ub()).unwrap();
        let y = predict(&m, &truth, &prot, 8).unwrap();
        (m, prot, truth, MeasuredData::new(y, None).unwrap())
    }

    #[test]
    fn noiseless_matches_log_linear() {
        let (m, prot, truth, data) = setup(10);
        let x0 = ParamSet::uniform(&["S0", "R2star"], 10, &[1.0, 20.0], &m.default_lb(), &m.default_ub()).unwrap();
        let fit = fit_nlls(&m, &data, &prot, &x0, &NllsOptions::default()).unwrap();
        let te = prot.axis("TE_s").unwrap().row_slice(0).to_vec();
        let tm = te.iter().sum::<f64>() / 8.0;
        for s in 0..10 {
            // closed-form line fit of ln S against TE
            let ly: Vec<f64> = data.values().row_slice(s).iter().map(|v| v.ln()).collect();
            let lm = ly.iter().sum::<f64>() / 8.0;
            let slope = te.iter().zip(&ly).map(|(t, l)| (t - tm) * (l - lm)).sum::<f64>() / te.iter().map(|t| (t - tm).powi(2)).sum::<f64>();
            let s0 = (lm - slope * tm).exp();
            assert!(fit.converged[s]);
            assert!((fit.params.field("S0").unwrap()[s] - s0).abs() < 1e-6);
            assert!((fit.params.field("R2star").unwrap()[s] + slope).abs() < 1e-6);
            assert!((fit.params.field("R2star").unwrap()[s] - truth.field("R2star").unwrap()[s]).abs() < 1e-6);
        }
    }

    #[test]
    fn truth_start_stays() {
        let (m, prot, truth, data) = setup(3);
        let opts = NllsOptions { multi_start: false, ..Default::default() };
        let fit = fit_nlls(&m, &data, &prot, &truth, &opts).unwrap();
        assert_eq!(fit.params.fields(), truth.fields());
        assert!(fit.cost.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let (m, prot, truth, _) = setup(3);
        let data = MeasuredData::new(Matrix::new(2, 8, vec![1.0; 16]).unwrap(), None).unwrap();
        assert!(fit_nlls(&m, &data, &prot, &truth, &NllsOptions::default()).is_err());
    }
}
