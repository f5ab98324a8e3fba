//! Whole-volume Adam against per-sample Levenberg-Marquardt on simulated
//! monoexponential decay, summarized with Bland-Altman statistics.
//!
//! cargo run --release --example nlls_compare -- [samples] [loss l1|l2] [lr] [iterations]

use std::sync::Arc;

use voxfit::models::{example_protocol, MonoExponential};
use voxfit::nlls::{fit_nlls, NllsOptions};
use voxfit::rng::Stream;
use voxfit::sim::{simulate, NoiseKind};
use voxfit::solver::{optimize, LossFunction, SolverOptions};
use voxfit::stats::{bland_altman, pearson};
use voxfit::volume::ParamSet;

fn main() -> voxfit::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let loss = match args.get(2).map(String::as_str) {
        Some("l2") => LossFunction::L2,
        _ => LossFunction::L1,
    };
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.001);
    let iteration: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(4000);

    let model = Arc::new(MonoExponential::default());
    let protocol = example_protocol(model.as_ref());
    let draw = |seed: u64, mean: f64, sd: f64, j: u64, lo: f64, hi: f64| -> Vec<f64> {
        (0..n).map(|s| (mean + sd * Stream::new(seed, s as u64, j, 0).normal(0)).abs().clamp(lo, hi)).collect()
    };
    let names = vec!["S0".to_string(), "R2star".to_string()];
    let truth = ParamSet::new(names.clone(), vec![draw(1, 2.0, 0.5, 0, 0.05, 4.95), draw(1, 30.0, 10.0, 1, 0.5, 49.5)], vec![0.0, 0.0], vec![5.0, 50.0])?;
    let x0 = ParamSet::new(names, vec![draw(2, 2.0, 0.5, 0, 0.05, 4.95), draw(2, 20.0, 10.0, 1, 0.5, 49.5)], vec![0.0, 0.0], vec![5.0, 50.0])?;
    let data = simulate(model.as_ref(), &truth, &protocol, 8, 100.0, NoiseKind::Rician, 3)?;

    let t0 = std::time::Instant::now();
    let opts = SolverOptions { loss_function: loss, initial_learn_rate: lr, iteration, ..Default::default() };
    let adam = optimize(&x0, &data, &protocol, model.clone(), &opts)?;
    let t_adam = t0.elapsed().as_secs_f64();
    let t0 = std::time::Instant::now();
    let nlls = fit_nlls(model.as_ref(), &data, &protocol, &x0, &NllsOptions::default())?;
    let t_nlls = t0.elapsed().as_secs_f64();

    println!("adam: {:?} after {} iterations, {t_adam:.2}s; nlls {t_nlls:.2}s", adam.stop_reason, adam.iterations_run);
    for name in ["S0", "R2star"] {
        let a = adam.final_params.field(name)?;
        let b = nlls.params.field(name)?;
        let t = truth.field(name)?;
        let ba = bland_altman(a, b)?;
        println!(
            "{name:>6}: adam-nlls bias {:+.4} LoA [{:+.3}, {:+.3}] r {:.4} | adam-truth bias {:+.4} | nlls-truth bias {:+.4}",
            ba.bias,
            ba.loa_low,
            ba.loa_high,
            pearson(a, b)?,
            bland_altman(a, t)?.bias,
            bland_altman(b, t)?.bias
        );
    }
    Ok(())
}
