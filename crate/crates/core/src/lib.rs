pub mod autodiff;
pub mod bench;
pub mod cli;
mod error;
pub mod gradcheck;
pub mod io;
pub mod matrix;
pub mod models;
pub mod nlls;
pub mod recon;
pub mod reduce;
pub mod regularizers;
pub mod rng;
pub mod samplers;
pub mod sim;
pub mod solver;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};
pub use matrix::Matrix;
