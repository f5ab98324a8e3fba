use std::f64::consts::PI;
use std::sync::Arc;

use super::{ParamSpec, SignalModel};
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::volume::Protocol;

/// Below this `b * Da` the stick kernel switches to its Taylor series.
const SERIES_CUTOFF: f64 = 1e-6;

/// Spherical mean of a stick, `sqrt(pi / (4x)) * erf(sqrt(x))` with
/// `x = b * Da`, returned with its derivative in `x`.
pub fn stick_kernel(x: f64) -> (f64, f64) {
    if x < SERIES_CUTOFF {
        // erf(s) = 2/sqrt(pi) (s - s^3/3 + s^5/10 - ...)
        (1.0 - x / 3.0 + x * x / 10.0, -1.0 / 3.0 + x / 5.0)
    } else {
        let s = x.sqrt();
        let e = libm::erf(s);
        let half_sqrt_pi = 0.5 * PI.sqrt();
        let value = half_sqrt_pi * e / s;
        let deriv = (-x).exp() / (2.0 * x) - 0.5 * half_sqrt_pi * e / (x * s);
        (value, deriv)
    }
}

/// Spherical-mean ball-and-stick:
/// `f * stick(b Da) + (1 - f) * exp(-b Diso)`, b in ms/um^2.
#[derive(Debug, Clone)]
pub struct BallStickSmt {
    params: Vec<ParamSpec>,
}

impl Default for BallStickSmt {
    fn default() -> Self {
        Self {
            params: vec![
                ParamSpec::new("f", 0.0, 1.0),
                ParamSpec::new("Da", 0.1, 3.0),
                ParamSpec::new("Diso", 0.1, 3.0),
            ],
        }
    }
}

impl SignalModel for BallStickSmt {
    fn name(&self) -> &str {
        "smt_ballstick"
    }

    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn protocol_axes(&self) -> &[&str] {
        &["bval_ms_per_um2"]
    }

    fn forward(&self, tape: &Tape, params: &[Var], protocol: &Protocol) -> Result<Var> {
        let b = tape.constant(protocol.axis("bval_ms_per_um2")?.clone())?;
        let stick = tape.map(tape.mul(params[1], b)?, Arc::new(stick_kernel));
        let intra = tape.mul(params[0], stick)?;
        let ball = tape.exp(tape.neg(tape.mul(params[2], b)?));
        let extra = tape.mul(tape.offset(tape.neg(params[0]), 1.0), ball)?;
        tape.add(intra, extra)
    }

    fn predict_sample(&self, theta: &[f64], protocol: &Protocol, sample: usize, out: &mut [f64]) -> Result<()> {
        let bval = protocol.axis("bval_ms_per_um2")?;
        let (f, da, diso) = (theta[0], theta[1], theta[2]);
        for (m, o) in out.iter_mut().enumerate() {
            let b = bval.get_broadcast(sample, m);
            *o = f * stick_kernel(da * b).0 + (-f + 1.0) * (-(diso * b)).exp();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(theta: [f64; 3], b: f64) -> f64 {
        let p = Protocol::new().with_row("bval_ms_per_um2", vec![b]).unwrap();
        let mut out = [0.0];
        BallStickSmt::default().predict_sample(&theta, &p, 0, &mut out).unwrap();
        out[0]
    }

    #[test]
    fn unit_signal_at_zero_b() {
        for theta in [[0.3, 1.0, 2.0], [1.0, 3.0, 0.1], [0.0, 0.1, 3.0]] {
            assert_eq!(eval(theta, 0.0), 1.0);
        }
    }

    #[test]
    fn pure_ball() {
        assert!((eval([0.0, 1.0, 3.0], 1.0) - 0.049_787_068_367_863_94).abs() < 1e-15);
    }

    #[test]
    fn pure_stick_against_direction_average() {
        // mean of exp(-b Da cos^2) over uniform directions; cos is uniform on [-1, 1]
        let x = 1.7;
        let n = 2_000_000;
        let avg: f64 = (0..n)
            .map(|k| {
                let c = -1.0 + 2.0 * (k as f64 + 0.5) / n as f64;
                (-x * c * c).exp()
            })
            .sum::<f64>()
            / n as f64;
        let v = eval([1.0, 1.7, 1.0], 1.0);
        assert!((v - avg).abs() / avg < 1e-9);
        assert!((v - 0.635_390_690_402_152_9).abs() < 1e-12);
    }

    #[test]
    fn kernel_is_continuous_across_series_cutoff() {
        let below = stick_kernel(SERIES_CUTOFF * (1.0 - 1e-9));
        let above = stick_kernel(SERIES_CUTOFF * (1.0 + 1e-9));
        assert!((below.0 - above.0).abs() < 1e-12);
        assert!((below.1 - above.1).abs() < 1e-8);
    }

    #[test]
    fn kernel_derivative_matches_finite_differences() {
        for x in [1e-4f64, 0.01, 0.3, 1.0, 4.0, 9.0] {
            let h = 1e-6 * x.max(1e-2);
            let fd = (stick_kernel(x + h).0 - stick_kernel(x - h).0) / (2.0 * h);
            assert!((fd - stick_kernel(x).1).abs() < 1e-7, "x={x}");
        }
    }
}
