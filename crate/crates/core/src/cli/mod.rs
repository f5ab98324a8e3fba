//! Command-line front end behind the `voxfit` binary.
//!
//! `simulate`, `fit`, `recon` and `bench` read one JSON config; paths inside
//! it are relative to the config file. `--set key.path=<json>` overrides any
//! key before the config is parsed.

mod bench;
mod fit;
mod recon;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{bail, Result};
use crate::gradcheck::{builtin_regularizers, check_model, check_regularizer};
use crate::io::read_mask;
use crate::models::{by_name, example_protocol, registry};
use crate::volume::{grid_graph, Connectivity, Mask, MeshSpec, NeighborGraph};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "VOXFIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "voxfit", version, about = "Batched voxelwise model fitting, sampling and reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate noisy measurements from a model.
    Simulate(RunArgs),
    /// Fit a model to a NIfTI volume (adam, mh, ensemble or nlls_oracle).
    Fit(RunArgs),
    /// SENSE reconstruction by CG on the normal equations or gradient descent.
    Recon(RunArgs),
    /// Time solvers across sample counts and write CSV.
    Bench(RunArgs),
    /// Compare AD gradients with finite differences for built-in models and regularizers.
    Gradcheck(GradcheckArgs),
    /// Build a neighbor graph from a mask or mesh and summarize it.
    Graph(GraphArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON config file.
    pub config: PathBuf,
    /// Output directory (overrides "output").
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Seed (overrides "seed").
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a config key, e.g. `--set adam.iteration=100`.
    #[arg(long = "set", value_name = "KEY=JSON")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Model names; all built-in models when omitted.
    #[arg(long)]
    pub model: Vec<String>,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Skip the regularizers.
    #[arg(long)]
    pub no_regularizers: bool,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Mask NIfTI; non-zero cells are nodes.
    #[arg(long, conflicts_with_all = ["dims", "mesh"])]
    pub mask: Option<PathBuf>,
    /// Full grid of the given size, e.g. `32,32,4`.
    #[arg(long, value_delimiter = ',', conflicts_with = "mesh")]
    pub dims: Option<Vec<usize>>,
    /// Mesh JSON with "n_vertices" and "faces" or "edges".
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// `grid2d` (4 neighbors) or `grid3d` (6 neighbors).
    #[arg(long, default_value = "grid3d")]
    pub connectivity: String,
    /// Write the edge list as CSV.
    #[arg(long)]
    pub edges: Option<PathBuf>,
}

/// Applies [`THREADS_ENV`] to the global pool. Call once, before any work.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = match v.trim().parse() {
            Ok(n) if n > 0 => n,
            _ => bail!(Config, "{THREADS_ENV} must be a positive integer, got '{v}'"),
        };
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| crate::Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let (cfg, base) = load(&a)?;
            fit::simulate_cmd(cfg, &base)
        }
        Command::Fit(a) => {
            let (cfg, base) = load(&a)?;
            fit::fit_cmd(cfg, &base)
        }
        Command::Recon(a) => {
            let (cfg, base) = load(&a)?;
            recon::recon_cmd(cfg, &base)
        }
        Command::Bench(a) => {
            let (cfg, base) = load(&a)?;
            bench::bench_cmd(cfg, &base)
        }
        Command::Gradcheck(a) => gradcheck_cmd(&a),
        Command::Graph(a) => graph_cmd(&a),
    }
}

/// Reads the config, applies flag overrides and returns it with the
/// directory relative paths resolve against.
fn load<T: DeserializeOwned>(a: &RunArgs) -> Result<(T, PathBuf)> {
    let text = fs::read_to_string(&a.config)?;
    let mut v: Value = serde_json::from_str(&text)?;
    for s in &a.set {
        let Some((key, raw)) = s.split_once('=') else {
            bail!(Config, "--set expects KEY=VALUE, got '{s}'");
        };
        let val = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut v, key, val)?;
    }
    if let Some(seed) = a.seed {
        set_path(&mut v, "seed", seed.into())?;
    }
    if let Some(out) = &a.output {
        let abs = std::env::current_dir()?.join(out);
        set_path(&mut v, "output", Value::String(abs.to_string_lossy().into_owned()))?;
    }
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((serde_json::from_value(v)?, base))
}

fn set_path(root: &mut Value, key: &str, val: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let Some(obj) = cur.as_object_mut() else {
            bail!(Config, "cannot set '{key}': '{p}' is not inside an object");
        };
        if i + 1 == parts.len() {
            obj.insert(p.to_string(), val);
            return Ok(());
        }
        cur = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn gradcheck_cmd(a: &GradcheckArgs) -> Result<()> {
    let names: Vec<String> = if a.model.is_empty() { registry().iter().map(|s| s.to_string()).collect() } else { a.model.clone() };
    let mut reports = Vec::new();
    for name in &names {
        let m = by_name(name)?;
        let proto = example_protocol(m.as_ref());
        reports.push(check_model(m.as_ref(), &proto, proto.n_meas(), a.points, a.seed)?);
    }
    if !a.no_regularizers {
        for (label, spec, n) in builtin_regularizers()? {
            reports.push(check_regularizer(&label, &spec, n, a.points, a.seed)?);
        }
    }
    let mut failed = Vec::new();
    for r in &reports {
        let ok = r.max_rel_err < a.tol;
        println!("{:<16} points={} max_rel_err={:.3e} {}", r.target, r.points, r.max_rel_err, if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(r.target.clone());
        }
    }
    if !failed.is_empty() {
        bail!(Numerical, "gradient check failed for {failed:?}");
    }
    Ok(())
}

fn graph_cmd(a: &GraphArgs) -> Result<()> {
    let conn = match a.connectivity.as_str() {
        "grid2d" => Connectivity::Grid2D4,
        "grid3d" => Connectivity::Grid3D6,
        other => bail!(Config, "unknown connectivity '{other}' (grid2d or grid3d)"),
    };
    let g: NeighborGraph = if let Some(m) = &a.mesh {
        let spec: MeshSpec = serde_json::from_str(&fs::read_to_string(m)?)?;
        spec.graph()?
    } else if let Some(p) = &a.mask {
        grid_graph(&read_mask(p)?, conn)
    } else if let Some(d) = &a.dims {
        if d.is_empty() || d.len() > 3 {
            bail!(Config, "--dims takes 1 to 3 sizes");
        }
        let mut dims = [1; 3];
        dims[..d.len()].copy_from_slice(d);
        grid_graph(&Mask::full(dims)?, conn)
    } else {
        bail!(Config, "graph needs --mask, --dims or --mesh");
    };
    let deg = g.degrees();
    let summary = serde_json::json!({
        "n_nodes": g.n_nodes(),
        "n_edges": g.n_edges(),
        "min_degree": deg.iter().min(),
        "max_degree": deg.iter().max(),
        "mean_degree": if deg.is_empty() { 0.0 } else { deg.iter().sum::<usize>() as f64 / deg.len() as f64 },
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(p) = &a.edges {
        let mut s = String::from("i,j\n");
        for (i, j) in g.edges() {
            s.push_str(&format!("{i},{j}\n"));
        }
        fs::write(p, s)?;
    }
    Ok(())
}

fn arc_model(name: &str) -> Result<Arc<dyn crate::models::SignalModel>> {
    by_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_path_nests() {
        let mut v = serde_json::json!({"adam": {"iteration": 5}});
        set_path(&mut v, "adam.iteration", 7.into()).unwrap();
        set_path(&mut v, "mcmc.seed", 3.into()).unwrap();
        assert_eq!(v, serde_json::json!({"adam": {"iteration": 7}, "mcmc": {"seed": 3}}));
        assert!(set_path(&mut v, "adam.iteration.x", 1.into()).is_err());
    }

    #[test]
    fn cli_parses_every_subcommand() {
        for args in [
            vec!["voxfit", "simulate", "c.json"],
            vec!["voxfit", "fit", "c.json", "--set", "adam.iteration=10", "-o", "out"],
            vec!["voxfit", "recon", "c.json", "--seed", "3"],
            vec!["voxfit", "bench", "c.json"],
            vec!["voxfit", "gradcheck", "--points", "5"],
            vec!["voxfit", "graph", "--dims", "4,4"],
        ] {
            Cli::try_parse_from(&args).unwrap();
        }
        assert!(Cli::try_parse_from(["voxfit", "graph", "--mask", "m.nii", "--mesh", "x.json"]).is_err());
    }
}
