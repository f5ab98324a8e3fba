//! Fits S0 and R2* of a simulated multi-echo decay for every voxel at once
//! with the bounded Adam solver.
//!
//! cargo run --release --example monoexp_adam -- [samples]

use std::sync::Arc;

use voxfit::bench::start_params;
use voxfit::models::{example_protocol, MonoExponential, SignalModel};
use voxfit::sim::{draw_truth, simulate, NoiseKind, TruthDist};
use voxfit::solver::{optimize, SolverOptions};
use voxfit::stats::{bland_altman, pearson};

fn main() -> voxfit::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4096);
    let model = Arc::new(MonoExponential::default());
    let protocol = example_protocol(model.as_ref());
    let dists = [
        ("S0".to_string(), TruthDist::Normal { mean: 2.0, std: 0.3, abs: true }),
        ("R2star".to_string(), TruthDist::Uniform { low: 10.0, high: 40.0 }),
    ]
    .into_iter()
    .collect();
    let truth = draw_truth(model.as_ref(), n, &dists, 0.01, 1)?;
    let data = simulate(model.as_ref(), &truth, &protocol, 8, 50.0, NoiseKind::Rician, 2)?;

    let x0 = start_params(model.as_ref(), n)?;
    let opts = SolverOptions { initial_learn_rate: 0.01, ..Default::default() };
    let t0 = std::time::Instant::now();
    let fit = optimize(&x0, &data, &protocol, model.clone(), &opts)?;
    println!(
        "{n} samples: {:?} after {} iterations ({:.2}s), loss {:.3e} -> {:.3e}",
        fit.stop_reason,
        fit.iterations_run,
        t0.elapsed().as_secs_f64(),
        fit.loss_history[0],
        fit.loss_history[fit.best_iteration - 1]
    );
    for name in model.param_names() {
        let (est, tru) = (fit.final_params.field(name)?, truth.field(name)?);
        let ba = bland_altman(est, tru)?;
        println!("{name:>6}: bias {:+.4}, LoA [{:+.3}, {:+.3}], r {:.4}", ba.bias, ba.loa_low, ba.loa_high, pearson(est, tru)?);
    }
    Ok(())
}
