use super::{ParamSpec, SignalModel};
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::volume::Protocol;

/// `S = S0 * exp(-TE * R2star)`, echo times in seconds.
#[derive(Debug, Clone)]
pub struct MonoExponential {
    params: Vec<ParamSpec>,
}

impl Default for MonoExponential {
    fn default() -> Self {
        Self { params: vec![ParamSpec::new("S0", 0.0, 5.0), ParamSpec::new("R2star", 0.0, 50.0)] }
    }
}

impl MonoExponential {
    pub fn with_bounds(s0: (f64, f64), r2star: (f64, f64)) -> Self {
        Self { params: vec![ParamSpec::new("S0", s0.0, s0.1), ParamSpec::new("R2star", r2star.0, r2star.1)] }
    }
}

impl SignalModel for MonoExponential {
    fn name(&self) -> &str {
        "monoexp"
    }

    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn protocol_axes(&self) -> &[&str] {
        &["TE_s"]
    }

    fn forward(&self, tape: &Tape, params: &[Var], protocol: &Protocol) -> Result<Var> {
        let te = tape.constant(protocol.axis("TE_s")?.clone())?;
        let decay = tape.exp(tape.neg(tape.mul(params[1], te)?));
        tape.mul(params[0], decay)
    }

    fn predict_sample(&self, theta: &[f64], protocol: &Protocol, sample: usize, out: &mut [f64]) -> Result<()> {
        let te = protocol.axis("TE_s")?;
        for (m, o) in out.iter_mut().enumerate() {
            *o = theta[0] * (-(theta[1] * te.get_broadcast(sample, m))).exp();
        }
        Ok(())
    }

    fn reference_level(&self, theta: &[f64]) -> f64 {
        theta[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(theta: [f64; 2], te: Vec<f64>) -> Vec<f64> {
        let p = Protocol::new().with_row("TE_s", te.clone()).unwrap();
        let mut out = vec![0.0; te.len()];
        MonoExponential::default().predict_sample(&theta, &p, 0, &mut out).unwrap();
        out
    }

    #[test]
    fn zero_echo_time_gives_s0() {
        assert_eq!(eval([1.7, 33.0], vec![0.0]), vec![1.7]);
    }

    #[test]
    fn reference_value() {
        // 2 * exp(-0.09)
        let v = eval([2.0, 30.0], vec![0.003])[0];
        assert!((v - 1.827_862_370_542_456_4).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_is_flat() {
        assert!(eval([1.3, 0.0], vec![0.0, 0.01, 0.04]).iter().all(|&v| v == 1.3));
    }
}
