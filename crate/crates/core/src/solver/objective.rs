//! Whole-volume data-fidelity objective plus weighted regularizers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{bail, Result};
use crate::matrix::Matrix;
use crate::models::{check_params, SignalModel};
use crate::regularizers::RegularizerSpec;
use crate::volume::{MeasuredData, ParamSet, Protocol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossFunction {
    #[default]
    L1,
    L2,
}

/// Scalar loss over parameter columns (each `[n x 1]`, in a fixed name order).
pub trait Objective {
    fn loss(&self, tape: &Tape, params: &[Var]) -> Result<Var>;
}

/// `norm(W * (S_meas - S(theta))) / n_active + sum(lambda * R)`.
pub struct DataFit {
    model: Arc<dyn SignalModel>,
    protocol: Protocol,
    values: Matrix,
    weights: Option<Matrix>,
    n_active: f64,
    loss: LossFunction,
    names: Vec<String>,
    regularizers: Vec<RegularizerSpec>,
}

impl DataFit {
    pub fn new(
        model: Arc<dyn SignalModel>,
        data: &MeasuredData,
        protocol: &Protocol,
        loss: LossFunction,
        names: &[String],
        regularizers: Vec<RegularizerSpec>,
    ) -> Result<Self> {
        let want = model.param_names();
        if names.len() < want.len() || names[..want.len()].iter().zip(&want).any(|(a, b)| a != b) {
            bail!(Config, "model '{}' expects parameters {:?}, got {:?}", model.name(), want, names);
        }
        protocol.check(data.n_samples(), data.n_meas())?;
        for r in &regularizers {
            r.validate(names, data.n_samples())?;
        }
        let n_active = data.n_active();
        if n_active == 0 {
            bail!(Data, "all measurement weights are zero");
        }
        Ok(Self {
            model,
            protocol: protocol.clone(),
            values: data.values().clone(),
            weights: data.weights().cloned(),
            n_active: n_active as f64,
            loss,
            names: names.to_vec(),
            regularizers,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Normalized data term alone.
    pub fn data_term(&self, tape: &Tape, params: &[Var]) -> Result<Var> {
        let n_model = self.model.params().len();
        let pred = self.model.forward(tape, &params[..n_model], &self.protocol)?;
        let (n, m) = self.values.shape();
        let pred = tape.broadcast(pred, n, m)?;
        if !tape.value(pred).is_finite() {
            bail!(Numerical, "model '{}' produced non-finite output; {}", self.model.name(), param_stats(tape, &self.names, params));
        }
        let mut resid = tape.sub(tape.constant(self.values.clone())?, pred)?;
        if let Some(w) = &self.weights {
            resid = tape.mul(resid, tape.constant(w.clone())?)?;
        }
        let norm = match self.loss {
            LossFunction::L1 => tape.sum_all(tape.abs(resid)),
            LossFunction::L2 => tape.sum_all(tape.square(resid)),
        };
        Ok(tape.scale(norm, 1.0 / self.n_active))
    }
}

impl Objective for DataFit {
    fn loss(&self, tape: &Tape, params: &[Var]) -> Result<Var> {
        let mut total = self.data_term(tape, params)?;
        for r in &self.regularizers {
            if r.lambda == 0.0 {
                continue;
            }
            let v = r.evaluate(tape, &self.names, params)?;
            total = tape.add(total, tape.scale(v, r.lambda))?;
        }
        Ok(total)
    }
}

fn param_stats(tape: &Tape, names: &[String], params: &[Var]) -> String {
    names
        .iter()
        .zip(params)
        .map(|(n, v)| {
            let m = tape.value(*v);
            let s = m.as_slice();
            let max = s.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let mean = s.iter().map(|x| x.abs()).sum::<f64>() / s.len() as f64;
            let bad = s.iter().filter(|x| !x.is_finite()).count();
            format!("{n}: max|.|={max:.4e} mean|.|={mean:.4e} non-finite={bad}")
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Objective value at fixed parameters.
pub fn evaluate_objective(
    params: &ParamSet,
    data: &MeasuredData,
    protocol: &Protocol,
    model: Arc<dyn SignalModel>,
    loss: LossFunction,
    regularizers: Vec<RegularizerSpec>,
) -> Result<f64> {
    check_params(model.as_ref(), params)?;
    if params.n_samples() != data.n_samples() {
        bail!(Shape, "{} parameter samples for {} data samples", params.n_samples(), data.n_samples());
    }
    let fit = DataFit::new(model, data, protocol, loss, params.names(), regularizers)?;
    let tape = Tape::new();
    let vars = params
        .fields()
        .iter()
        .map(|f| tape.constant(Matrix::column(f.clone())))
        .collect::<Result<Vec<_>>>()?;
    let l = fit.loss(&tape, &vars)?;
    Ok(tape.scalar_value(l))
}
