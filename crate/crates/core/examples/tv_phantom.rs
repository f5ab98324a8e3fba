//! Piecewise-constant R2* phantom fitted with and without 3D total variation
//! on the parameter maps.
//!
//! cargo run --release --example tv_phantom -- [lambda]

use std::sync::Arc;

use voxfit::bench::start_params;
use voxfit::models::{example_protocol, MonoExponential, SignalModel};
use voxfit::regularizers::RegularizerSpec;
use voxfit::sim::{simulate, NoiseKind};
use voxfit::solver::{optimize, SolverOptions};
use voxfit::stats::{mean, sample_std};
use voxfit::volume::{grid_graph, Connectivity, Mask, ParamSet};

fn main() -> voxfit::Result<()> {
    let lambda: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3e-3);
    let mask = Mask::full([32, 32, 4])?;
    let n = mask.count();
    let region: Vec<usize> = (0..n).map(|i| {
        let c = mask.coord(i);
        (c[0] / 16) * 2 + c[1] / 16
    }).collect();
    let (s0, r2) = ([1.5, 2.0, 2.5, 1.8], [20.0, 30.0, 40.0, 25.0]);
    let model = Arc::new(MonoExponential::default());
    let truth = ParamSet::new(
        vec!["S0".into(), "R2star".into()],
        vec![region.iter().map(|&r| s0[r]).collect(), region.iter().map(|&r| r2[r]).collect()],
        model.default_lb(),
        model.default_ub(),
    )?;
    let protocol = example_protocol(model.as_ref());
    let data = simulate(model.as_ref(), &truth, &protocol, 8, 30.0, NoiseKind::Rician, 7)?;
    let x0 = start_params(model.as_ref(), n)?;

    let graph = Arc::new(grid_graph(&mask, Connectivity::Grid3D6));
    let plain = SolverOptions { initial_learn_rate: 0.01, ..Default::default() };
    let tv = SolverOptions { regularizers: vec![RegularizerSpec::tv(graph, &["S0", "R2star"], lambda)], ..plain.clone() };
    println!("region  truth   mean(plain) std(plain)  mean(tv) std(tv)");
    let a = optimize(&x0, &data, &protocol, model.clone(), &plain)?;
    let b = optimize(&x0, &data, &protocol, model.clone(), &tv)?;
    for k in 0..4 {
        let pick = |f: &[f64]| -> Vec<f64> { (0..n).filter(|&i| region[i] == k).map(|i| f[i]).collect() };
        let (p, t) = (pick(a.final_params.field("R2star")?), pick(b.final_params.field("R2star")?));
        println!("{k:>6}  {:>5.1}  {:>11.3} {:>10.3}  {:>8.3} {:>7.3}", r2[k], mean(&p), sample_std(&p), mean(&t), sample_std(&t));
    }
    Ok(())
}
