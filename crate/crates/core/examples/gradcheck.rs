//! Reverse-mode gradients of every built-in model and regularizer against
//! extrapolated central differences.
//!
//! cargo run --release --example gradcheck -- [points]

use voxfit::gradcheck::{builtin_regularizers, check_model, check_regularizer};
use voxfit::models::{by_name, example_protocol, registry};

fn main() -> voxfit::Result<()> {
    let points: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    for name in registry() {
        let model = by_name(name)?;
        let protocol = example_protocol(model.as_ref());
        let m = protocol.n_meas().max(1);
        let r = check_model(model.as_ref(), &protocol, m, points, 1)?;
        println!("{:<16} {:.2e}", r.target, r.max_rel_err);
    }
    for (label, spec, n) in builtin_regularizers()? {
        let r = check_regularizer(&label, &spec, n, points, 2)?;
        println!("{:<16} {:.2e}", r.target, r.max_rel_err);
    }
    Ok(())
}
