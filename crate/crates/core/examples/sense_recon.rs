//! Reconstructs an undersampled multi-coil, multi-echo phantom with CAIPI
//! sampling: CG least squares, gradient descent, and gradient descent with TV.
//!
//! cargo run --release --example sense_recon -- [rz] [noise]

use voxfit::recon::{add_kspace_noise, caipi_mask, coil_maps, nrmse, phantom, recon_gd, recon_lsqr, Encoding, ReconOptions, ReconProblem};
use voxfit::solver::{LossFunction, SolverOptions};

fn main() -> voxfit::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let rz: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let sigma: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.002);
    let (ny, nz, nc) = (48, 48, 8);
    let te = [0.003, 0.008, 0.013, 0.018];
    let dims = [ny, nz, nc, te.len()];
    let ph = phantom(ny, nz, &te);
    let mask = caipi_mask(ny, nz, rz, 1, 1, te.len())?;
    let coils = coil_maps(ny, nz, nc);
    let enc = Encoding::new(dims, coils.clone(), mask.clone())?;
    let mut k = enc.encode(&ph.image)?;
    add_kspace_noise(&mut k, &mask, dims, sigma, 3);
    let problem = ReconProblem::new(dims, k, coils, mask)?;
    println!("Rz {rz}, {} of {} k-space lines sampled", enc.n_sampled() / nc, ny * nz * te.len());
    println!("zero-filled     NRMSE {:.4}", nrmse(&problem.zero_filled(), &ph.image));

    let ls = recon_lsqr(&problem, 0.0, 1e-8)?;
    println!("cg lsqr         NRMSE {:.4} ({} iterations)", nrmse(&ls.image, &ph.image), ls.iterations);
    let tik = recon_lsqr(&problem, 1e-3, 1e-8)?;
    println!("cg tikhonov     NRMSE {:.4}", nrmse(&tik.image, &ph.image));

    let solver = SolverOptions { iteration: 400, initial_learn_rate: 0.01, tol: 0.0, convergence_value: 0.0, ..Default::default() };
    for (label, loss, lambda_tv) in [("gd l2", LossFunction::L2, 0.0), ("gd l1", LossFunction::L1, 0.0), ("gd l1 + tv", LossFunction::L1, 2e-3)] {
        let r = recon_gd(&problem, &ReconOptions { loss, lambda_tv, solver: solver.clone() })?;
        println!("{label:<15} NRMSE {:.4}", nrmse(&r.image, &ph.image));
    }
    Ok(())
}
