use super::*;
use crate::rng::Stream;
use proptest::prelude::*;

/// Central-difference gradient of `f` at `x`.
fn fd_grad(x: &Matrix, f: &dyn Fn(&Matrix) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            let mut m = x.clone();
            p.as_mut_slice()[i] += h;
            m.as_mut_slice()[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

fn check_unary(build: &dyn Fn(&Tape, Var) -> Result<Var>, x: Matrix) {
    let value_of = |m: &Matrix| {
        let t = Tape::new();
        let v = t.param(m.clone()).unwrap();
        let y = build(&t, v).unwrap();
        t.scalar_value(t.sum_all(y))
    };
    let t = Tape::new();
    let v = t.param(x.clone()).unwrap();
    let y = build(&t, v).unwrap();
    let root = t.sum_all(y);
    let g = t.backward(root).unwrap();
    let ad = g.get(v).unwrap().as_slice().to_vec();
    let fd = fd_grad(&x, &value_of);
    for (a, f) in ad.iter().zip(&fd) {
        let rel = (a - f).abs() / f.abs().max(1e-3);
        assert!(rel < 1e-5, "ad {a} vs fd {f}");
    }
}

fn random(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Matrix {
    let s = Stream::new(seed, 0, 0, 0);
    Matrix::new(rows, cols, (0..rows * cols).map(|i| lo + (hi - lo) * s.uniform(i as u64)).collect()).unwrap()
}

#[test]
fn constant_leaf_has_no_gradient() {
    let t = Tape::new();
    let c = t.constant(Matrix::column(vec![1.0, 2.0])).unwrap();
    let p = t.param(Matrix::column(vec![3.0, 4.0])).unwrap();
    let y = t.sum_all(t.mul(c, p).unwrap());
    let g = t.backward(y).unwrap();
    assert!(g.get(c).is_none());
    assert_eq!(g.get(p).unwrap().shape(), (2, 1));
}

#[test]
fn two_leaves_summed() {
    let t = Tape::new();
    let a = t.param(Matrix::scalar(2.0)).unwrap();
    let b = t.param(Matrix::scalar(5.0)).unwrap();
    let g = t.backward(t.add(a, b).unwrap()).unwrap();
    assert_eq!(g.get(a).unwrap().as_slice(), &[1.0]);
    assert_eq!(g.get(b).unwrap().as_slice(), &[1.0]);
}

#[test]
fn non_finite_leaf_rejected() {
    let t = Tape::new();
    assert!(matches!(t.param(Matrix::scalar(f64::NAN)), Err(crate::Error::Domain(_))));
}

#[test]
fn scalar_derivatives() {
    let t = Tape::new();
    let x = t.param(Matrix::scalar(0.0)).unwrap();
    assert_eq!(t.backward(t.exp(x)).unwrap().get(x).unwrap().as_slice(), &[1.0]);

    let t = Tape::new();
    let x = t.param(Matrix::scalar(0.0)).unwrap();
    assert_eq!(t.backward(t.smooth_abs(x, 1e-8)).unwrap().get(x).unwrap().as_slice(), &[0.0]);

    let t = Tape::new();
    let x = t.param(Matrix::scalar(1.0)).unwrap();
    let d = t.backward(t.erf(x)).unwrap().get(x).unwrap().as_slice()[0];
    // 2/sqrt(pi) * exp(-1)
    assert!((d - 0.415_107_497_420_594_7).abs() < 1e-15);
}

#[test]
fn sum_and_square_gradients() {
    let t = Tape::new();
    let x = t.param(Matrix::column(vec![1.0; 5])).unwrap();
    let g = t.backward(t.sum_all(x)).unwrap();
    assert_eq!(g.get(x).unwrap().as_slice(), &[1.0; 5]);
}

#[test]
fn non_scalar_root_is_contract_error() {
    let t = Tape::new();
    let x = t.param(Matrix::column(vec![1.0, 2.0])).unwrap();
    assert!(matches!(t.backward(x), Err(crate::Error::Contract(_))));
}

#[test]
fn domain_and_shape_errors() {
    let t = Tape::new();
    let x = t.param(Matrix::column(vec![-1.0, 2.0])).unwrap();
    assert!(matches!(t.log(x), Err(crate::Error::Domain(_))));
    assert!(matches!(t.sqrt(x), Err(crate::Error::Domain(_))));
    assert!(matches!(t.powf(x, 0.5), Err(crate::Error::Domain(_))));
    assert!(t.powf(x, 2.0).is_ok());
    let y = t.param(Matrix::column(vec![1.0, 2.0, 3.0])).unwrap();
    assert!(matches!(t.add(x, y), Err(crate::Error::Shape(_))));
}

#[test]
fn division_guard_keeps_values_finite() {
    let t = Tape::new();
    let a = t.param(Matrix::column(vec![1.0, 1.0])).unwrap();
    let b = t.param(Matrix::column(vec![0.0, -0.0])).unwrap();
    let q = t.div(a, b).unwrap();
    assert!(t.value(q).is_finite());
    let g = t.backward(t.sum_all(q)).unwrap();
    assert!(g.get(a).unwrap().is_finite());
    assert_eq!(g.get(b).unwrap().as_slice(), &[0.0, 0.0]);
}

#[test]
fn abs_subgradient_at_zero() {
    let t = Tape::new();
    let x = t.param(Matrix::column(vec![-2.0, 0.0, 3.0])).unwrap();
    let g = t.backward(t.sum_all(t.abs(x))).unwrap();
    assert_eq!(g.get(x).unwrap().as_slice(), &[-1.0, 0.0, 1.0]);
}

#[test]
fn every_unary_op_matches_finite_differences() {
    let x = random(6, 3, 0.2, 2.0, 1);
    check_unary(&|t, v| Ok(t.neg(v)), x.clone());
    check_unary(&|t, v| Ok(t.exp(v)), x.clone());
    check_unary(&|t, v| t.log(v), x.clone());
    check_unary(&|t, v| t.sqrt(v), x.clone());
    check_unary(&|t, v| Ok(t.square(v)), x.clone());
    check_unary(&|t, v| t.powf(v, 2.7), x.clone());
    check_unary(&|t, v| Ok(t.erf(v)), x.clone());
    check_unary(&|t, v| Ok(t.smooth_abs(v, 0.1)), random(6, 3, -2.0, 2.0, 2));
    check_unary(&|t, v| Ok(t.abs(v)), random(6, 3, 0.1, 2.0, 3));
    check_unary(&|t, v| Ok(t.sigmoid(v)), random(6, 3, -4.0, 4.0, 4));
    check_unary(&|t, v| Ok(t.scale(v, -3.5)), x.clone());
    check_unary(&|t, v| Ok(t.offset(v, 1.5)), x.clone());
    check_unary(&|t, v| Ok(t.sum_over_meas(t.square(v))), x.clone());
    check_unary(&|t, v| Ok(t.mean_all(t.exp(v))), x.clone());
}

#[test]
fn broadcast_binary_ops_match_finite_differences() {
    let row = random(1, 4, 0.5, 1.5, 5);
    let col = random(5, 1, 0.5, 1.5, 6);
    for op in 0..4 {
        // gradient wrt the column operand, row constant
        let build = |t: &Tape, v: Var| {
            let r = t.constant(row.clone())?;
            match op {
                0 => t.add(v, r),
                1 => t.sub(r, v),
                2 => t.mul(v, r),
                _ => t.div(r, v),
            }
        };
        check_unary(&build, col.clone());
        // and wrt the row operand
        let build = |t: &Tape, v: Var| {
            let c = t.constant(col.clone())?;
            match op {
                0 => t.add(c, v),
                1 => t.sub(v, c),
                2 => t.mul(c, v),
                _ => t.div(v, c),
            }
        };
        check_unary(&build, row.clone());
    }
    check_unary(&|t, v| t.broadcast(v, 5, 4), col.clone());
}

#[test]
fn gather_concat_linear_match_finite_differences() {
    let x = random(5, 1, -1.0, 1.0, 7);
    let idx: Arc<[usize]> = vec![0, 3, 3, 4, 1].into();
    check_unary(&|t, v| Ok(t.square(t.gather_rows(v, idx.clone())?)), x.clone());
    check_unary(&|t, v| {
        let c = t.concat_rows(&[v, t.exp(v)])?;
        Ok(t.square(c))
    }, x.clone());

    struct Mat(Matrix);
    impl LinearOperator for Mat {
        fn input_len(&self) -> usize {
            self.0.cols()
        }
        fn output_len(&self) -> usize {
            self.0.rows()
        }
        fn apply(&self, x: &[f64]) -> Vec<f64> {
            (0..self.0.rows()).map(|r| self.0.row_slice(r).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
        }
        fn adjoint(&self, y: &[f64]) -> Vec<f64> {
            (0..self.0.cols()).map(|c| (0..self.0.rows()).map(|r| self.0.get(r, c) * y[r]).sum()).collect()
        }
    }
    let op: Arc<dyn LinearOperator> = Arc::new(Mat(random(3, 5, -1.0, 1.0, 8)));
    check_unary(&|t, v| Ok(t.square(t.linear(v, op.clone())?)), x);
}

#[test]
fn backward_twice_is_identical() {
    let t = Tape::new();
    let x = t.param(random(50, 1, 0.1, 1.0, 9)).unwrap();
    let te = t.constant(random(1, 8, 0.0, 0.04, 10)).unwrap();
    let y = t.exp(t.neg(t.mul(x, te).unwrap()));
    let root = t.sum_all(t.square(y));
    let a = t.backward(root).unwrap();
    let b = t.backward(root).unwrap();
    assert_eq!(a.get(x).unwrap(), b.get(x).unwrap());
    t.reset();
    assert!(t.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composite_matches_finite_differences(seed in 0u64..10_000) {
        // f(x) = sum( erf(x) * exp(-x^2 t) / (1 + sqrt(x^2 + 0.1)) )
        let x = random(4, 1, -1.5, 1.5, seed);
        let tt = random(1, 3, 0.1, 1.0, seed + 1);
        check_unary(&|t, v| {
            let te = t.constant(tt.clone())?;
            let num = t.mul(t.erf(v), t.exp(t.neg(t.mul(t.square(v), te)?)))?;
            let den = t.offset(t.sqrt(t.offset(t.square(v), 0.1))?, 1.0);
            t.div(num, den)
        }, x);
    }

    #[test]
    fn per_sample_gradients_are_independent(seed in 0u64..10_000) {
        // Gradient rows of a sample-separable loss equal one-sample recomputation.
        let x = random(6, 1, 0.1, 2.0, seed);
        let te = random(1, 5, 0.0, 1.0, seed + 3);
        let grad_of = |m: &Matrix| {
            let t = Tape::new();
            let v = t.param(m.clone()).unwrap();
            let c = t.constant(te.clone()).unwrap();
            let r = t.sum_all(t.square(t.exp(t.neg(t.mul(v, c).unwrap()))));
            t.backward(r).unwrap().get(v).unwrap().clone()
        };
        let full = grad_of(&x);
        for s in 0..6 {
            let single = grad_of(&Matrix::column(vec![x.as_slice()[s]]));
            prop_assert_eq!(full.as_slice()[s].to_bits(), single.as_slice()[0].to_bits());
        }
    }
}
