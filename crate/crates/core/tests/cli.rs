use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn voxfit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxfit"))
        .current_dir(dir)
        .env("VOXFIT_THREADS", "1")
        .args(args)
        .output()
        .expect("spawn voxfit")
}

fn write(dir: &Path, name: &str, v: Value) {
    fs::write(dir.join(name), serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

fn simulate(dir: &Path) {
    write(
        dir,
        "sim.json",
        serde_json::json!({
            "model": "monoexp",
            "dims": [6, 6, 2],
            "truth": {
                "S0": {"dist": "normal", "mean": 2.0, "std": 0.2},
                "R2star": {"dist": "uniform", "low": 15.0, "high": 35.0}
            },
            "snr": 50.0,
            "noise": "rician",
            "seed": 3,
            "output": "sim"
        }),
    );
    let out = voxfit(dir, &["simulate", "sim.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_writes_volumes_and_protocol() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    for f in ["data.nii", "mask.nii", "protocol.json", "truth_S0.nii", "truth_R2star.nii"] {
        assert!(tmp.path().join("sim").join(f).exists(), "missing {f}");
    }
    let data = voxfit::io::read_nifti(&tmp.path().join("sim/data.nii")).unwrap();
    assert_eq!(data.n_meas, 8);
}

#[test]
fn adam_fit_recovers_truth_roughly() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    write(
        tmp.path(),
        "fit.json",
        serde_json::json!({
            "model": "monoexp",
            "solver": "adam",
            "data": "sim/data.nii",
            "mask": "sim/mask.nii",
            "protocol": "sim/protocol.json",
            "output": "fit",
            "adam": {"iteration": 2000, "initialLearnRate": 0.01}
        }),
    );
    let out = voxfit(tmp.path(), &["fit", "fit.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit = voxfit::io::read_nifti(&tmp.path().join("fit/R2star.nii")).unwrap();
    let truth = voxfit::io::read_nifti(&tmp.path().join("sim/truth_R2star.nii")).unwrap();
    let (a, b) = (&fit.data[..], &truth.data[..]);
    let mae = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    assert!(mae < 2.0, "mean abs error {mae}");
    let summary: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("fit/fit.json")).unwrap()).unwrap();
    let history = summary["loss_history"].as_array().unwrap();
    assert_eq!(history.len() as u64, summary["iterations_run"].as_u64().unwrap());
}

#[test]
fn set_overrides_and_mh_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    write(
        tmp.path(),
        "fit.json",
        serde_json::json!({
            "model": "monoexp",
            "solver": "mh",
            "data": "sim/data.nii",
            "protocol": "sim/protocol.json",
            "output": "unused",
            "mcmc": {"iteration": 100}
        }),
    );
    let out = voxfit(tmp.path(), &["fit", "fit.json", "-o", "post", "--set", "mcmc.iteration=200"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["S0.nii", "S0_std.nii", "R2star_mcse.nii", "acceptance.nii", "fit.json"] {
        assert!(tmp.path().join("post").join(f).exists(), "missing {f}");
    }
    assert!(!tmp.path().join("unused").exists());
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "bad.json", serde_json::json!({"model": "monoexp", "bogus": 1}));
    assert_eq!(voxfit(tmp.path(), &["fit", "bad.json"]).status.code(), Some(2));
    write(
        tmp.path(),
        "missing.json",
        serde_json::json!({
            "model": "monoexp",
            "solver": "adam",
            "data": "nowhere.nii",
            "protocol": "nowhere.json",
            "output": "out"
        }),
    );
    assert_eq!(voxfit(tmp.path(), &["fit", "missing.json"]).status.code(), Some(3));
    assert_eq!(voxfit(tmp.path(), &["fit", "absent.json"]).status.code(), Some(3));
}

#[test]
fn graph_reports_degrees() {
    let tmp = tempfile::tempdir().unwrap();
    let out = voxfit(tmp.path(), &["graph", "--dims", "3,3,1", "--connectivity", "grid2d"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_nodes"], 9);
    assert_eq!(v["n_edges"], 12);
    assert_eq!(v["max_degree"], 4);
}

#[test]
fn recon_phantom_lsqr() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "rec.json",
        serde_json::json!({
            "phantom": {"ny": 16, "nz": 16, "coils": 4, "rz": 2, "zShift": 1, "teShift": 1, "te": [0.005, 0.015]},
            "method": "lsqr",
            "output": "rec"
        }),
    );
    let out = voxfit(tmp.path(), &["recon", "rec.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let re = voxfit::io::read_nifti(&tmp.path().join("rec/image_re.nii")).unwrap();
    assert_eq!(re.data.len(), 16 * 16 * 2);
    assert!(tmp.path().join("rec/recon.json").exists());
}

#[test]
fn gradcheck_passes_for_one_model() {
    let tmp = tempfile::tempdir().unwrap();
    let out = voxfit(tmp.path(), &["gradcheck", "--model", "monoexp", "--points", "20", "--no-regularizers"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
