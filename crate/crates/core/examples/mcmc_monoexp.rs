//! Posterior sampling of the monoexponential model with Metropolis-Hastings
//! and the affine-invariant ensemble sampler; the noise level is sampled too.
//!
//! cargo run --release --example mcmc_monoexp -- [samples]

use std::sync::Arc;

use voxfit::bench::{dataset, start_params, with_noise};
use voxfit::models::MonoExponential;
use voxfit::samplers::{self, Algorithm, McmcOptions};
use voxfit::stats::mean;

fn main() -> voxfit::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let model = Arc::new(MonoExponential::default());
    let (truth, data, protocol) = dataset(model.as_ref(), n, 50.0, 5)?;
    let x0 = with_noise(&start_params(model.as_ref(), n)?, 0.05)?;

    for algorithm in [Algorithm::Mh, Algorithm::Ensemble] {
        let opts = McmcOptions { algorithm, iteration: 4000, thinning: 5, n_walker: 16, seed: 6, ..Default::default() };
        let t0 = std::time::Instant::now();
        let post = samplers::run(&x0, &data, &protocol, model.clone(), &opts)?;
        let secs = t0.elapsed().as_secs_f64();
        let (m, s) = post.field("R2star").expect("sampled parameter");
        let err: Vec<f64> = m.iter().zip(truth.field("R2star")?).map(|(a, b)| (a - b).abs()).collect();
        let z: Vec<f64> = m.iter().zip(s).zip(truth.field("R2star")?).map(|((a, sd), b)| ((a - b) / sd).abs()).collect();
        println!(
            "{algorithm:?}: {secs:.2}s, acceptance {:.2}, R2* mean abs error {:.3}, mean posterior std {:.3}, truth within 2 std {:.1}%",
            mean(&post.acceptance_rate),
            mean(&err),
            mean(s),
            100.0 * z.iter().filter(|&&v| v <= 2.0).count() as f64 / n as f64
        );
        let (noise, _) = post.field("noise").expect("noise is sampled");
        println!("    mean noise estimate {:.4}", mean(noise));
    }
    Ok(())
}
