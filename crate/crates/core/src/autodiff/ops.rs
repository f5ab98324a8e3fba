use std::sync::Arc;

use super::{Node, Tape, Var, DIV_GUARD};
use crate::error::{bail, Result};
use crate::matrix::{broadcast_shape, Matrix};
use crate::reduce::{collect_with, pairwise_sum, pairwise_sum_by};

/// A real linear map usable as a tape operation. `adjoint` must be the exact
/// transpose of `apply`.
pub trait LinearOperator: Send + Sync {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, y: &[f64]) -> Vec<f64>;
}

pub(super) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Square(usize),
    Powf(usize, f64),
    Erf(usize),
    SmoothAbs(usize),
    Abs(usize),
    Sigmoid(usize),
    Scale(usize, f64),
    Offset(usize),
    SumAll(usize),
    SumMeas(usize),
    Broadcast(usize),
    Gather(usize, Arc<[usize]>),
    Concat(Vec<usize>),
    Linear(usize, Arc<dyn LinearOperator>),
    Map(usize, ScalarFn),
}

/// Elementwise function returning `(value, derivative)` at a point.
pub type ScalarFn = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

#[inline]
fn guard_div(b: f64) -> f64 {
    if b.abs() < DIV_GUARD {
        if b.is_sign_negative() && b != 0.0 {
            -DIV_GUARD
        } else {
            DIV_GUARD
        }
    } else {
        b
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

impl Tape {
    fn binary(&self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64 + Sync, op: fn(usize, usize) -> Op) -> Result<Var> {
        let Some((rows, cols)) = broadcast_shape(a.shape(), b.shape()) else {
            bail!(Shape, "{name}: shapes {:?} and {:?} do not broadcast", a.shape(), b.shape());
        };
        let value = {
            let nodes = self.nodes.borrow();
            let (va, vb) = (&nodes[a.idx].value, &nodes[b.idx].value);
            let data = if a.shape() == b.shape() {
                let (sa, sb) = (va.as_slice(), vb.as_slice());
                collect_with(rows * cols, |i| f(sa[i], sb[i]))
            } else {
                collect_with(rows * cols, |i| {
                    let (r, c) = (i / cols, i % cols);
                    f(va.get_broadcast(r, c), vb.get_broadcast(r, c))
                })
            };
            Matrix::new(rows, cols, data)?
        };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, op(a.idx, b.idx), needs))
    }

    fn unary(&self, a: Var, f: impl Fn(f64) -> f64 + Sync, op: Op) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let src = nodes[a.idx].value.as_slice();
            Matrix::new(a.rows, a.cols, collect_with(src.len(), |i| f(src[i]))).expect("same shape")
        };
        let needs = self.needs(a);
        self.push(value, op, needs)
    }

    fn min_value(&self, a: Var) -> f64 {
        self.value(a).as_slice().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    /// `a / b` with `|b|` clamped to at least [`DIV_GUARD`].
    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", |x, y| x / guard_div(y), Op::Div)
    }

    pub fn neg(&self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg(a.idx))
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a.idx))
    }

    /// Natural log; negative inputs are a domain error, zero is clamped to
    /// the smallest positive normal.
    pub fn log(&self, a: Var) -> Result<Var> {
        let m = self.min_value(a);
        if m < 0.0 {
            bail!(Domain, "log of negative value {m}");
        }
        Ok(self.unary(a, |x| x.max(f64::MIN_POSITIVE).ln(), Op::Log(a.idx)))
    }

    pub fn sqrt(&self, a: Var) -> Result<Var> {
        let m = self.min_value(a);
        if m < 0.0 {
            bail!(Domain, "sqrt of negative value {m}");
        }
        Ok(self.unary(a, f64::sqrt, Op::Sqrt(a.idx)))
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a.idx))
    }

    /// `a^p` for a constant exponent. Negative bases need an integer `p`.
    pub fn powf(&self, a: Var, p: f64) -> Result<Var> {
        if p.fract() != 0.0 && self.min_value(a) < 0.0 {
            bail!(Domain, "non-integer power {p} of a negative value");
        }
        Ok(self.unary(a, move |x| x.powf(p), Op::Powf(a.idx, p)))
    }

    pub fn erf(&self, a: Var) -> Var {
        self.unary(a, libm::erf, Op::Erf(a.idx))
    }

    /// `sqrt(x^2 + eps^2)`, a differentiable stand-in for `|x|`.
    pub fn smooth_abs(&self, a: Var, eps: f64) -> Var {
        let e2 = eps * eps;
        self.unary(a, move |x| (x * x + e2).sqrt(), Op::SmoothAbs(a.idx))
    }

    /// `|x|` with subgradient `sign(x)`, `sign(0) = 0`.
    pub fn abs(&self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a.idx))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a.idx))
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        self.unary(a, move |x| c * x, Op::Scale(a.idx, c))
    }

    pub fn offset(&self, a: Var, c: f64) -> Var {
        self.unary(a, move |x| x + c, Op::Offset(a.idx))
    }

    /// Sum of every entry, as `1 x 1`.
    pub fn sum_all(&self, a: Var) -> Var {
        let s = pairwise_sum(self.value(a).as_slice());
        let needs = self.needs(a);
        self.push(Matrix::scalar(s), Op::SumAll(a.idx), needs)
    }

    /// Mean of every entry, as `1 x 1`.
    pub fn mean_all(&self, a: Var) -> Var {
        let n = (a.rows * a.cols).max(1) as f64;
        self.scale(self.sum_all(a), 1.0 / n)
    }

    /// Row sums over the measurement axis, `[n x m] -> [n x 1]`.
    pub fn sum_over_meas(&self, a: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let v = &nodes[a.idx].value;
            let cols = a.cols;
            Matrix::column(collect_with(a.rows, |r| {
                let row = &v.as_slice()[r * cols..(r + 1) * cols];
                let mut acc = 0.0;
                for x in row {
                    acc += x;
                }
                acc
            }))
        };
        let needs = self.needs(a);
        self.push(value, Op::SumMeas(a.idx), needs)
    }

    /// Explicit broadcast to `[rows x cols]`.
    pub fn broadcast(&self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        if broadcast_shape(a.shape(), (rows, cols)) != Some((rows, cols)) {
            bail!(Shape, "cannot broadcast {:?} to {:?}", a.shape(), (rows, cols));
        }
        let value = {
            let nodes = self.nodes.borrow();
            let v = &nodes[a.idx].value;
            Matrix::new(rows, cols, collect_with(rows * cols, |i| v.get_broadcast(i / cols, i % cols)))?
        };
        let needs = self.needs(a);
        Ok(self.push(value, Op::Broadcast(a.idx), needs))
    }

    /// Rows `idx` of `a`, stacked.
    pub fn gather_rows(&self, a: Var, idx: Arc<[usize]>) -> Result<Var> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= a.rows) {
            bail!(Index, "gather index {bad} out of range for {} rows", a.rows);
        }
        let value = self.value(a).select_rows(&idx);
        let needs = self.needs(a);
        Ok(self.push(value, Op::Gather(a.idx, idx), needs))
    }

    /// Vertical concatenation of operands with equal column counts.
    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            bail!(Shape, "concat of zero operands");
        };
        if parts.iter().any(|p| p.cols != first.cols) {
            bail!(Shape, "concat operands must share a column count");
        }
        let value = {
            let nodes = self.nodes.borrow();
            let mut data = Vec::new();
            for p in parts {
                data.extend_from_slice(nodes[p.idx].value.as_slice());
            }
            Matrix::new(data.len() / first.cols, first.cols, data)?
        };
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::Concat(parts.iter().map(|p| p.idx).collect()), needs))
    }

    /// Elementwise custom function with a user-supplied derivative.
    pub fn map(&self, a: Var, f: ScalarFn) -> Var {
        let g = f.clone();
        self.unary(a, move |x| g(x).0, Op::Map(a.idx, f))
    }

    /// Applies a linear operator to a column vector.
    pub fn linear(&self, a: Var, op: Arc<dyn LinearOperator>) -> Result<Var> {
        if a.cols != 1 || a.rows != op.input_len() {
            bail!(Shape, "linear operator expects [{} x 1], got {:?}", op.input_len(), a.shape());
        }
        let y = op.apply(self.value(a).as_slice());
        if y.len() != op.output_len() {
            bail!(Contract, "linear operator returned {} values, declared {}", y.len(), op.output_len());
        }
        let needs = self.needs(a);
        Ok(self.push(Matrix::column(y), Op::Linear(a.idx, op), needs))
    }
}

/// Sums a full-shape contribution down to an operand's (broadcast) shape.
fn reduce_to(full: Matrix, shape: (usize, usize)) -> Matrix {
    let (rows, cols) = full.shape();
    if full.shape() == shape {
        return full;
    }
    let (ra, ca) = shape;
    let nr = if ra == 1 { rows } else { 1 };
    let nc = if ca == 1 { cols } else { 1 };
    let data = (0..ra * ca)
        .map(|o| {
            let (r0, c0) = (o / ca, o % ca);
            pairwise_sum_by(nr * nc, &|k| {
                let (dr, dc) = (k / nc, k % nc);
                full.get(if ra == 1 { dr } else { r0 }, if ca == 1 { dc } else { c0 })
            })
        })
        .collect();
    Matrix::new(ra, ca, data).expect("reduced shape")
}

fn elementwise(g: &Matrix, x: &Matrix, y: &Matrix, d: impl Fn(f64, f64) -> f64 + Sync) -> Matrix {
    let (gs, xs, ys) = (g.as_slice(), x.as_slice(), y.as_slice());
    Matrix::new(g.rows(), g.cols(), collect_with(gs.len(), |i| gs[i] * d(xs[i], ys[i]))).expect("same shape")
}

fn binary_grads(
    g: &Matrix,
    a: &Matrix,
    b: &Matrix,
    da: impl Fn(f64, f64) -> f64 + Sync,
    db: impl Fn(f64, f64) -> f64 + Sync,
) -> (Matrix, Matrix) {
    let (rows, cols) = g.shape();
    let gs = g.as_slice();
    let same = a.shape() == b.shape() && a.shape() == g.shape();
    let pick = |i: usize| {
        if same {
            (a.as_slice()[i], b.as_slice()[i])
        } else {
            let (r, c) = (i / cols, i % cols);
            (a.get_broadcast(r, c), b.get_broadcast(r, c))
        }
    };
    let fa = collect_with(rows * cols, |i| {
        let (x, y) = pick(i);
        gs[i] * da(x, y)
    });
    let fb = collect_with(rows * cols, |i| {
        let (x, y) = pick(i);
        gs[i] * db(x, y)
    });
    (
        reduce_to(Matrix::new(rows, cols, fa).unwrap(), a.shape()),
        reduce_to(Matrix::new(rows, cols, fb).unwrap(), b.shape()),
    )
}

pub(super) fn backprop(nodes: &[Node], i: usize, g: &Matrix, emit: &mut dyn FnMut(usize, Matrix)) {
    let out = &nodes[i].value;
    let val = |k: usize| &nodes[k].value;
    let needs = |k: usize| nodes[k].needs_grad;
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
            let (a, b) = (*a, *b);
            if !needs(a) && !needs(b) {
                return;
            }
            let (ga, gb) = match &nodes[i].op {
                Op::Add(..) => binary_grads(g, val(a), val(b), |_, _| 1.0, |_, _| 1.0),
                Op::Sub(..) => binary_grads(g, val(a), val(b), |_, _| 1.0, |_, _| -1.0),
                Op::Mul(..) => binary_grads(g, val(a), val(b), |_, y| y, |x, _| x),
                _ => binary_grads(
                    g,
                    val(a),
                    val(b),
                    |_, y| 1.0 / guard_div(y),
                    |x, y| if y.abs() < DIV_GUARD { 0.0 } else { -x / (y * y) },
                ),
            };
            emit(a, ga);
            emit(b, gb);
        }
        Op::Neg(a) => emit(*a, elementwise(g, val(*a), out, |_, _| -1.0)),
        Op::Exp(a) => emit(*a, elementwise(g, val(*a), out, |_, y| y)),
        Op::Log(a) => emit(*a, elementwise(g, val(*a), out, |x, _| {
            if x < f64::MIN_POSITIVE {
                0.0
            } else {
                1.0 / x
            }
        })),
        Op::Sqrt(a) => emit(*a, elementwise(g, val(*a), out, |_, y| 0.5 / y.max(DIV_GUARD))),
        Op::Square(a) => emit(*a, elementwise(g, val(*a), out, |x, _| 2.0 * x)),
        Op::Powf(a, p) => {
            let p = *p;
            emit(*a, elementwise(g, val(*a), out, move |x, _| if p == 0.0 { 0.0 } else { p * x.powf(p - 1.0) }))
        }
        Op::Erf(a) => emit(*a, elementwise(g, val(*a), out, |x, _| TWO_OVER_SQRT_PI * (-x * x).exp())),
        Op::SmoothAbs(a) => emit(*a, elementwise(g, val(*a), out, |x, y| if y > 0.0 { x / y } else { 0.0 })),
        Op::Abs(a) => emit(*a, elementwise(g, val(*a), out, |x, _| sign(x))),
        Op::Sigmoid(a) => emit(*a, elementwise(g, val(*a), out, |_, y| y * (1.0 - y))),
        Op::Scale(a, c) => {
            let c = *c;
            emit(*a, elementwise(g, val(*a), out, move |_, _| c))
        }
        Op::Offset(a) => emit(*a, g.clone()),
        Op::SumAll(a) => {
            let (r, c) = val(*a).shape();
            emit(*a, Matrix::filled(r, c, g.as_slice()[0]));
        }
        Op::SumMeas(a) => {
            let (r, c) = val(*a).shape();
            let gs = g.as_slice();
            emit(*a, Matrix::new(r, c, collect_with(r * c, |k| gs[k / c])).unwrap());
        }
        Op::Broadcast(a) => emit(*a, reduce_to(g.clone(), val(*a).shape())),
        Op::Gather(a, idx) => {
            let (r, c) = val(*a).shape();
            let mut acc = Matrix::zeros(r, c);
            let dst = acc.as_mut_slice();
            for (k, &src) in idx.iter().enumerate() {
                for j in 0..c {
                    dst[src * c + j] += g.get(k, j);
                }
            }
            emit(*a, acc);
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for &p in parts {
                let (r, c) = val(p).shape();
                let slice = g.as_slice()[offset..offset + r * c].to_vec();
                offset += r * c;
                emit(p, Matrix::new(r, c, slice).unwrap());
            }
        }
        Op::Linear(a, op) => emit(*a, Matrix::column(op.adjoint(g.as_slice()))),
        Op::Map(a, f) => emit(*a, elementwise(g, val(*a), out, |x, _| f(x).1)),
    }
}
