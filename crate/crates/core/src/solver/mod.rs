//! Whole-volume gradient-descent fitting.
//!
//! All samples share one objective; box bounds are enforced through a logistic
//! reparameterization and the best-loss iterate is returned.

mod objective;
mod optimizers;
mod stop;
mod transform;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{bail, Error, Result};
use crate::matrix::Matrix;
use crate::models::{check_params, SignalModel};
use crate::regularizers::RegularizerSpec;
use crate::volume::{MeasuredData, ParamSet, Protocol};

pub use objective::{evaluate_objective, DataFit, LossFunction, Objective};
pub use optimizers::{Optimizer, OptimizerState};
pub use stop::{check_stop, trend_slope, StopReason};
pub use transform::{Transform, BOUND_MARGIN};

fn default_lr() -> f64 {
    0.001
}
fn default_iteration() -> usize {
    4000
}
fn default_tol() -> f64 {
    1e-4
}
fn default_convergence() -> f64 {
    1e-8
}
fn default_window() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SolverOptions {
    pub optimizer: Optimizer,
    pub initial_learn_rate: f64,
    pub loss_function: LossFunction,
    pub iteration: usize,
    pub tol: f64,
    pub convergence_value: f64,
    pub convergence_window: usize,
    /// Fit only masked samples (`true`) or the full grid with the mask as
    /// weights (`false`). Consumed when preparing data from a volume.
    pub is_optimise_memory: bool,
    pub seed: u64,
    #[serde(skip)]
    pub regularizers: Vec<RegularizerSpec>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Adam,
            initial_learn_rate: default_lr(),
            loss_function: LossFunction::L1,
            iteration: default_iteration(),
            tol: default_tol(),
            convergence_value: default_convergence(),
            convergence_window: default_window(),
            is_optimise_memory: true,
            seed: 0,
            regularizers: Vec::new(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_learn_rate > 0.0) || !self.initial_learn_rate.is_finite() {
            bail!(Config, "initialLearnRate must be positive, got {}", self.initial_learn_rate);
        }
        if self.iteration < 1 {
            bail!(Config, "iteration must be >= 1");
        }
        if self.convergence_window < 2 {
            bail!(Config, "convergenceWindow must be >= 2, got {}", self.convergence_window);
        }
        if self.tol.is_nan() || self.convergence_value.is_nan() {
            bail!(Config, "tol and convergenceValue must not be NaN");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub final_params: ParamSet,
    pub loss_history: Vec<f64>,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
    /// 1-based iteration whose parameters were returned.
    pub best_iteration: usize,
}

/// Minimizes `objective` starting from `x0`; parameter columns are passed to
/// the objective in `x0.names()` order.
pub fn optimize_objective(x0: &ParamSet, objective: &dyn Objective, options: &SolverOptions) -> Result<FitResult> {
    options.validate()?;
    let transforms: Vec<Transform> = x0.lb().iter().zip(x0.ub()).map(|(&l, &u)| Transform::new(l, u)).collect();
    let mut z: Vec<Vec<f64>> = x0
        .fields()
        .iter()
        .zip(&transforms)
        .map(|(f, t)| f.iter().map(|&v| t.to_unconstrained(v)).collect())
        .collect();
    let mut states: Vec<OptimizerState> = z.iter().map(|f| OptimizerState::new(options.optimizer, f.len())).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, z.clone(), 0usize);
    let tape = Tape::new();
    let stop_reason = loop {
        tape.reset();
        let zv = z.iter().map(|f| tape.param(Matrix::column(f.clone()))).collect::<Result<Vec<_>>>()?;
        let theta = zv.iter().zip(&transforms).map(|(&v, t)| t.on_tape(&tape, v)).collect::<Result<Vec<_>>>()?;
        if cfg!(debug_assertions) {
            for (v, t) in theta.iter().zip(&transforms) {
                debug_assert!(tape.value(*v).as_slice().iter().all(|x| !(*x < t.lb || *x > t.ub)), "iterate left bounds");
            }
        }
        let loss = match objective.loss(&tape, &theta) {
            Ok(l) => l,
            Err(Error::Numerical(msg)) if !history.is_empty() => break StopReason::Diverged(msg),
            Err(e) => return Err(e),
        };
        if !loss.is_scalar() {
            bail!(Contract, "objective returned shape {:?}, expected 1x1", loss.shape());
        }
        let value = tape.scalar_value(loss);
        if !value.is_finite() {
            let msg = format!("loss became {value} at iteration {}", history.len() + 1);
            if history.is_empty() {
                bail!(Numerical, "{msg}");
            }
            break StopReason::Diverged(msg);
        }
        history.push(value);
        if value < best.0 {
            best = (value, z.clone(), history.len());
        }
        if let Some(r) = check_stop(&history, options.iteration, options.tol, options.convergence_value, options.convergence_window) {
            break r;
        }
        let grads = tape.backward(loss)?;
        for ((zf, v), st) in z.iter_mut().zip(&zv).zip(states.iter_mut()) {
            match grads.get(*v) {
                Some(g) => st.update(zf, g.as_slice(), options.initial_learn_rate),
                None => {
                    let zero = vec![0.0; zf.len()];
                    st.update(zf, &zero, options.initial_learn_rate)
                }
            }
        }
    };
    let fields = best
        .1
        .iter()
        .zip(&transforms)
        .map(|(f, t)| f.iter().map(|&v| t.from_unconstrained(v)).collect())
        .collect();
    Ok(FitResult {
        final_params: x0.with_fields(fields)?,
        iterations_run: history.len(),
        loss_history: history,
        stop_reason,
        best_iteration: best.2,
    })
}

/// Fits `model` to `data` with the data-fidelity objective and
/// `options.regularizers`.
pub fn optimize(
    x0: &ParamSet,
    data: &MeasuredData,
    protocol: &Protocol,
    model: Arc<dyn SignalModel>,
    options: &SolverOptions,
) -> Result<FitResult> {
    check_params(model.as_ref(), x0)?;
    if x0.n_samples() != data.n_samples() {
        bail!(Shape, "{} parameter samples for {} data samples", x0.n_samples(), data.n_samples());
    }
    let fit = DataFit::new(model, data, protocol, options.loss_function, x0.names(), options.regularizers.clone())?;
    optimize_objective(x0, &fit, options)
}
