//! Volume workflow on disk: write a simulated 4D NIfTI series and a brain-like
//! mask, read them back, fit inside the mask and write parameter maps.
//!
//! cargo run --release --example nifti_maps -- [output_dir]

use std::path::PathBuf;
use std::sync::Arc;

use voxfit::io::{read_mask, read_nifti, write_nifti, write_param_maps, FloatType};
use voxfit::models::{example_protocol, MonoExponential, SignalModel};
use voxfit::sim::{simulate, NoiseKind};
use voxfit::solver::{optimize, SolverOptions};
use voxfit::volume::{pack, unpack, GridData, Mask, ParamSet};

fn main() -> voxfit::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("voxfit_nifti_maps"));
    std::fs::create_dir_all(&dir)?;
    let dims = [24, 24, 6];
    let full = Mask::full(dims)?;
    let n = full.count();
    // ellipsoid mask; R2* rises toward the center
    let radius = |i: usize| {
        let c = full.coord(i);
        let u = (c[0] as f64 + 0.5) / 12.0 - 1.0;
        let v = (c[1] as f64 + 0.5) / 12.0 - 1.0;
        let w = (c[2] as f64 + 0.5) / 3.0 - 1.0;
        (u * u + v * v + w * w).sqrt()
    };
    let inside: Vec<bool> = (0..n).map(|i| radius(i) < 0.9).collect();
    let model = Arc::new(MonoExponential::default());
    let truth = ParamSet::new(
        vec!["S0".into(), "R2star".into()],
        vec![vec![2.0; n], (0..n).map(|i| 40.0 - 25.0 * radius(i).min(1.0)).collect()],
        model.default_lb(),
        model.default_ub(),
    )?;
    let protocol = example_protocol(model.as_ref());
    let series = simulate(model.as_ref(), &truth, &protocol, 8, 40.0, NoiseKind::Rician, 9)?;
    let volume = unpack(series.values(), &full, 0.0)?;
    write_nifti(&dir.join("series.nii"), &volume, FloatType::F32)?;
    let mask_vol = GridData::new(dims, 1, inside.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())?;
    write_nifti(&dir.join("mask.nii"), &mask_vol, FloatType::F32)?;

    let volume = read_nifti(&dir.join("series.nii"))?;
    let mask = read_mask(&dir.join("mask.nii"))?;
    let data = pack(&volume, &mask)?;
    println!("read {:?} x {} measurements, {} voxels in mask", volume.dims, volume.n_meas, mask.count());
    let x0 = ParamSet::uniform(&["S0", "R2star"], mask.count(), &[1.0, 20.0], &model.default_lb(), &model.default_ub())?;
    let fit = optimize(&x0, &data, &protocol, model.clone(), &SolverOptions { initial_learn_rate: 0.01, ..Default::default() })?;
    println!("{:?} after {} iterations", fit.stop_reason, fit.iterations_run);
    for p in write_param_maps(&dir, "fit_", &fit.final_params, &mask, FloatType::F32)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
