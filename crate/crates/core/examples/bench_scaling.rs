//! Wall time per sample of the batched solvers as the sample count grows,
//! printed as CSV.
//!
//! cargo run --release --example bench_scaling -- [max_samples]

use std::sync::Arc;

use voxfit::bench::{bench_scaling, rows_to_csv, BenchConfig, BenchSolver};
use voxfit::models::MonoExponential;
use voxfit::samplers::McmcOptions;

fn main() -> voxfit::Result<()> {
    let max: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let counts = std::iter::successors(Some(100usize), |c| Some(c * 10)).take_while(|&c| c <= max).collect();
    let cfg = BenchConfig {
        counts,
        solvers: vec![BenchSolver::Adam, BenchSolver::Mh, BenchSolver::Nlls],
        repeats: 2,
        mcmc: McmcOptions { iteration: 500, ..Default::default() },
        ..Default::default()
    };
    let rows = bench_scaling(Arc::new(MonoExponential::default()), &cfg)?;
    print!("{}", rows_to_csv(&rows));
    Ok(())
}
