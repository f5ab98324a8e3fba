//! Denoises a scalar field on a triangulated cylinder by fitting the identity
//! model with an l2 data term and total variation over the mesh edges.
//!
//! cargo run --release --example surface_tv

use std::sync::Arc;

use voxfit::matrix::Matrix;
use voxfit::models::Identity;
use voxfit::regularizers::RegularizerSpec;
use voxfit::rng::Stream;
use voxfit::solver::{optimize, LossFunction, SolverOptions};
use voxfit::volume::{mesh_graph, MeasuredData, ParamSet, Protocol};

fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn main() -> voxfit::Result<()> {
    let (around, along) = (32, 24);
    let n = around * along;
    let vid = |i: usize, j: usize| j * around + i % around;
    let mut faces = Vec::new();
    for j in 0..along - 1 {
        for i in 0..around {
            faces.push([vid(i, j), vid(i + 1, j), vid(i, j + 1)]);
            faces.push([vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }
    let graph = Arc::new(mesh_graph(n, &faces, &[])?);
    println!("mesh: {} vertices, {} edges", graph.n_nodes(), graph.n_edges());

    // two patches of different thickness on a constant background
    let truth: Vec<f64> = (0..n).map(|v| {
        let (i, j) = (v % around, v / around);
        if i < around / 2 && j < along / 2 { 3.0 } else if j >= along / 2 && i >= around / 4 { 2.0 } else { 2.5 }
    }).collect();
    let noisy: Vec<f64> = truth.iter().enumerate().map(|(v, t)| t + 0.2 * Stream::new(11, v as u64, 0, 0).normal(0)).collect();
    let data = MeasuredData::new(Matrix::column(noisy.clone()), None)?;
    let x0 = ParamSet::new(vec!["theta".into()], vec![noisy.clone()], vec![0.0], vec![5.0])?;
    let model = Arc::new(Identity::default());

    println!("noisy input rms error {:.4}", rms(&noisy, &truth));
    for lambda in [0.0, 0.1, 0.3, 1.0] {
        let opts = SolverOptions {
            initial_learn_rate: 0.01,
            loss_function: LossFunction::L2,
            iteration: 2000,
            tol: 0.0,
            convergence_value: 0.0,
            regularizers: if lambda > 0.0 { vec![RegularizerSpec::tv(graph.clone(), &["theta"], lambda)] } else { Vec::new() },
            ..Default::default()
        };
        let fit = optimize(&x0, &data, &Protocol::new(), model.clone(), &opts)?;
        println!("lambda {lambda:<5}: rms error {:.4} ({} iterations)", rms(fit.final_params.field("theta")?, &truth), fit.iterations_run);
    }
    Ok(())
}
