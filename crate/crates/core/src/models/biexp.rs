use super::{ParamSpec, SignalModel};
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::volume::Protocol;

/// Two-pool decay `A1 exp(-t R2_1) + A2 exp(-t R2_2)`.
#[derive(Debug, Clone)]
pub struct BiExponential {
    params: Vec<ParamSpec>,
}

impl Default for BiExponential {
    fn default() -> Self {
        Self {
            params: vec![
                ParamSpec::new("A1", 0.0, 5.0),
                ParamSpec::new("A2", 0.0, 5.0),
                ParamSpec::new("R2_1", 1.0, 300.0),
                ParamSpec::new("R2_2", 1.0, 300.0),
            ],
        }
    }
}

impl SignalModel for BiExponential {
    fn name(&self) -> &str {
        "biexp"
    }

    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn protocol_axes(&self) -> &[&str] {
        &["TE_s"]
    }

    fn forward(&self, tape: &Tape, params: &[Var], protocol: &Protocol) -> Result<Var> {
        let te = tape.constant(protocol.axis("TE_s")?.clone())?;
        let pool1 = tape.mul(params[0], tape.exp(tape.neg(tape.mul(params[2], te)?)))?;
        let pool2 = tape.mul(params[1], tape.exp(tape.neg(tape.mul(params[3], te)?)))?;
        tape.add(pool1, pool2)
    }

    fn predict_sample(&self, theta: &[f64], protocol: &Protocol, sample: usize, out: &mut [f64]) -> Result<()> {
        let te = protocol.axis("TE_s")?;
        for (m, o) in out.iter_mut().enumerate() {
            let t = te.get_broadcast(sample, m);
            *o = theta[0] * (-(theta[2] * t)).exp() + theta[1] * (-(theta[3] * t)).exp();
        }
        Ok(())
    }

    fn reference_level(&self, theta: &[f64]) -> f64 {
        theta[0] + theta[1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MonoExponential;

    fn eval(model: &dyn SignalModel, theta: &[f64], te: &[f64]) -> Vec<f64> {
        let p = Protocol::new().with_row("TE_s", te.to_vec()).unwrap();
        let mut out = vec![0.0; te.len()];
        model.predict_sample(theta, &p, 0, &mut out).unwrap();
        out
    }

    #[test]
    fn second_pool_off_is_monoexp() {
        let te = [0.0, 0.005, 0.02];
        let b = eval(&BiExponential::default(), &[1.5, 0.0, 40.0, 10.0], &te);
        let m = eval(&MonoExponential::default(), &[1.5, 40.0], &te);
        assert_eq!(b, m);
    }

    #[test]
    fn zero_time_sums_amplitudes() {
        assert_eq!(eval(&BiExponential::default(), &[1.25, 0.5, 40.0, 10.0], &[0.0]), vec![1.75]);
    }

    #[test]
    fn reference_value() {
        // exp(-1) + exp(-0.2)
        let v = eval(&BiExponential::default(), &[1.0, 1.0, 100.0, 20.0], &[0.01])[0];
        assert!((v - 1.186_610_194_249_424_2).abs() < 1e-12);
    }
}
