//! Differentiable penalty terms added to the fitting objective.
//!
//! Volumetric 2D/3D total variation and surface total variation are the same
//! operator on different [`NeighborGraph`]s: the mean over edges of
//! `|theta_i - theta_j|`, smoothed by `sqrt(x^2 + eps^2)` with `eps = 1e-12`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{bail, Result};
use crate::matrix::Matrix;
use crate::volume::{grid_graph, Connectivity, Mask, MeshSpec, NeighborGraph};

/// Smoothing of `|x|` inside TV and the prior penalty.
pub const TV_EPS: f64 = 1e-12;

/// User penalty over the target parameter columns; must return a `1 x 1` value.
pub type PenaltyHook = Arc<dyn Fn(&Tape, &[Var]) -> Result<Var> + Send + Sync>;

#[derive(Clone)]
pub enum RegularizerKind {
    TvGraph { graph: Arc<NeighborGraph> },
    /// Per-sample (or single broadcast) mean and standard deviation.
    Prior { mu: Vec<f64>, sigma: Vec<f64> },
    Custom(PenaltyHook),
}

impl fmt::Debug for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TvGraph { graph } => write!(f, "TvGraph({} nodes, {} edges)", graph.n_nodes(), graph.n_edges()),
            Self::Prior { mu, .. } => write!(f, "Prior({} values)", mu.len()),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// One weighted penalty `lambda * R(targets)`.
#[derive(Debug, Clone)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub targets: Vec<String>,
    pub lambda: f64,
}

impl RegularizerSpec {
    pub fn tv(graph: Arc<NeighborGraph>, targets: &[&str], lambda: f64) -> Self {
        Self { kind: RegularizerKind::TvGraph { graph }, targets: to_strings(targets), lambda }
    }

    pub fn prior(mu: Vec<f64>, sigma: Vec<f64>, targets: &[&str], lambda: f64) -> Self {
        Self { kind: RegularizerKind::Prior { mu, sigma }, targets: to_strings(targets), lambda }
    }

    pub fn custom(hook: PenaltyHook, targets: &[&str], lambda: f64) -> Self {
        Self { kind: RegularizerKind::Custom(hook), targets: to_strings(targets), lambda }
    }

    /// Checks targets, weights and sizes against a parameter layout.
    pub fn validate(&self, names: &[String], n_samples: usize) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            bail!(Config, "regularization weight must be finite and >= 0, got {}", self.lambda);
        }
        if self.targets.is_empty() {
            bail!(Config, "regularizer has no target parameters");
        }
        for t in &self.targets {
            if !names.contains(t) {
                bail!(Config, "regularizer target '{t}' is not a fitted parameter ({names:?})");
            }
        }
        match &self.kind {
            RegularizerKind::TvGraph { graph } if graph.n_nodes() != n_samples => {
                bail!(Shape, "graph has {} nodes for {n_samples} samples", graph.n_nodes())
            }
            RegularizerKind::Prior { mu, sigma } => check_prior(mu, sigma, n_samples),
            _ => Ok(()),
        }
    }

    /// Unweighted penalty value: summed over targets for built-in kinds; the
    /// hook sees all target columns at once.
    pub fn evaluate(&self, tape: &Tape, names: &[String], params: &[Var]) -> Result<Var> {
        let vars = self
            .targets
            .iter()
            .map(|t| match names.iter().position(|n| n == t) {
                Some(i) => Ok(params[i]),
                None => bail!(Config, "regularizer target '{t}' is not a fitted parameter"),
            })
            .collect::<Result<Vec<_>>>()?;
        match &self.kind {
            RegularizerKind::Custom(hook) => {
                let r = hook(tape, &vars)?;
                if !r.is_scalar() {
                    bail!(Contract, "custom regularizer returned shape {:?}, expected 1x1", r.shape());
                }
                Ok(r)
            }
            kind => {
                let mut total: Option<Var> = None;
                for v in vars {
                    let r = match kind {
                        RegularizerKind::TvGraph { graph } => tv_graph(tape, v, graph)?,
                        RegularizerKind::Prior { mu, sigma } => prior_penalty(tape, v, mu, sigma)?,
                        RegularizerKind::Custom(_) => unreachable!(),
                    };
                    total = Some(match total {
                        Some(t) => tape.add(t, r)?,
                        None => r,
                    });
                }
                Ok(total.expect("at least one target"))
            }
        }
    }
}

fn to_strings(s: &[&str]) -> Vec<String> {
    s.iter().map(|x| x.to_string()).collect()
}

fn check_prior(mu: &[f64], sigma: &[f64], n: usize) -> Result<()> {
    for (name, v) in [("mu", mu), ("sigma", sigma)] {
        if v.len() != 1 && v.len() != n {
            bail!(Shape, "prior {name} has {} values for {n} samples", v.len());
        }
        if v.iter().any(|x| !x.is_finite()) {
            bail!(Config, "prior {name} has non-finite values");
        }
    }
    if sigma.iter().any(|&s| s <= 0.0) {
        bail!(Config, "prior sigma must be > 0");
    }
    Ok(())
}

/// Mean over graph edges of `smooth_abs(theta_i - theta_j)`.
pub fn tv_graph(tape: &Tape, field: Var, graph: &NeighborGraph) -> Result<Var> {
    if field.shape() != (graph.n_nodes(), 1) {
        bail!(Shape, "TV field of shape {:?} on a graph of {} nodes", field.shape(), graph.n_nodes());
    }
    if graph.n_edges() == 0 {
        return tape.scalar(0.0);
    }
    let (from, to) = graph.endpoints();
    let diff = tape.sub(tape.gather_rows(field, from.into())?, tape.gather_rows(field, to.into())?)?;
    Ok(tape.mean_all(tape.smooth_abs(diff, TV_EPS)))
}

/// Mean over samples of `smooth_abs((theta - mu) / sigma)`.
pub fn prior_penalty(tape: &Tape, field: Var, mu: &[f64], sigma: &[f64]) -> Result<Var> {
    let n = field.shape().0;
    check_prior(mu, sigma, n)?;
    let column = |v: &[f64]| tape.constant(Matrix::column(v.to_vec()));
    let z = tape.div(tape.sub(field, column(mu)?)?, column(sigma)?)?;
    Ok(tape.mean_all(tape.smooth_abs(z, TV_EPS)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

impl ScalarOrVec {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Self::Scalar(v) => vec![*v],
            Self::Vec(v) => v.clone(),
        }
    }
}

/// Serialized regularizer, e.g.
/// `{"kind":"tv_graph","params":["R2star"],"lambda":1e-3,"graph":"grid3d"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    pub kind: String,
    pub params: Vec<String>,
    pub lambda: f64,
    /// `grid2d`, `grid3d` or `mesh:<file>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<ScalarOrVec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<ScalarOrVec>,
}

impl RegularizerConfig {
    /// Builds the runtime spec; grid graphs come from `mask`, mesh paths are
    /// relative to `base_dir`.
    pub fn resolve(&self, mask: &Mask, base_dir: &Path) -> Result<RegularizerSpec> {
        let kind = match self.kind.as_str() {
            "tv_graph" => {
                let graph = match self.graph.as_deref() {
                    Some("grid2d") => grid_graph(mask, Connectivity::Grid2D4),
                    Some("grid3d") | None => grid_graph(mask, Connectivity::Grid3D6),
                    Some(g) if g.starts_with("mesh:") => {
                        let text = std::fs::read_to_string(base_dir.join(&g[5..]))?;
                        let spec: MeshSpec = serde_json::from_str(&text)?;
                        spec.graph()?
                    }
                    Some(g) => bail!(Config, "unknown graph '{g}' (grid2d, grid3d or mesh:<file>)"),
                };
                RegularizerKind::TvGraph { graph: Arc::new(graph) }
            }
            "prior" => {
                let (Some(mu), Some(sigma)) = (&self.mu, &self.sigma) else {
                    bail!(Config, "prior regularizer needs 'mu' and 'sigma'");
                };
                RegularizerKind::Prior { mu: mu.to_vec(), sigma: sigma.to_vec() }
            }
            other => bail!(Config, "unknown regularizer kind '{other}' (tv_graph or prior)"),
        };
        Ok(RegularizerSpec { kind, targets: self.params.clone(), lambda: self.lambda })
    }
}
