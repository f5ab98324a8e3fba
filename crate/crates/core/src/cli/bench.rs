use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use super::{arc_model, resolve};
use crate::bench::{agreement, bench_scaling, dataset, rows_to_csv, start_params, stats_to_csv, time_mh, BenchConfig};
use crate::error::Result;
use crate::nlls::fit_nlls;
use crate::solver::optimize;

#[derive(Debug, Deserialize)]
pub struct MhTimingConfig {
    pub samples: usize,
    pub iteration: usize,
}

#[derive(Debug, Deserialize)]
pub struct BenchCmdConfig {
    #[serde(default = "default_model")]
    pub model: String,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Adam and NLLS against the truth at the smallest count.
    #[serde(default)]
    pub agreement: bool,
    #[serde(default)]
    pub mh_timing: Option<MhTimingConfig>,
    #[serde(flatten)]
    pub bench: BenchConfig,
}

fn default_model() -> String {
    "monoexp".into()
}

pub fn bench_cmd(mut cfg: BenchCmdConfig, base: &Path) -> Result<()> {
    let model = arc_model(&cfg.model)?;
    cfg.bench.seed = cfg.seed;
    let out = resolve(base, &cfg.output);
    fs::create_dir_all(&out)?;
    let rows = bench_scaling(model.clone(), &cfg.bench)?;
    fs::write(out.join("bench.csv"), rows_to_csv(&rows))?;
    if cfg.agreement {
        let n = cfg.bench.counts[0];
        let (truth, data, protocol) = dataset(model.as_ref(), n, cfg.bench.snr, cfg.seed)?;
        let x0 = start_params(model.as_ref(), n)?;
        let adam = optimize(&x0, &data, &protocol, model.clone(), &cfg.bench.adam)?.final_params;
        let nlls = fit_nlls(model.as_ref(), &data, &protocol, &x0, &cfg.bench.nlls)?.params;
        let mut stats = Vec::new();
        for name in truth.names() {
            let t = truth.field(name)?;
            stats.push(agreement(&format!("adam:{name}"), adam.field(name)?, t)?);
            stats.push(agreement(&format!("nlls:{name}"), nlls.field(name)?, t)?);
            stats.push(agreement(&format!("adam_vs_nlls:{name}"), adam.field(name)?, nlls.field(name)?)?);
        }
        fs::write(out.join("agreement.csv"), stats_to_csv(&stats))?;
    }
    if let Some(t) = &cfg.mh_timing {
        let r = time_mh(Arc::clone(&model), t.samples, t.iteration, cfg.bench.snr, cfg.seed)?;
        fs::write(out.join("mh_timing.json"), serde_json::to_string_pretty(&r)? + "\n")?;
    }
    Ok(())
}
