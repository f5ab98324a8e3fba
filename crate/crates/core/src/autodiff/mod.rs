//! Reverse-mode automatic differentiation over `[n_samples x width]` matrices.
//!
//! Operations are recorded on a [`Tape`] in evaluation order; [`Tape::backward`]
//! walks it in reverse from a scalar root. Operands broadcast along either
//! axis when one side has extent 1, so a per-sample parameter `[n x 1]`
//! combines directly with a protocol row `[1 x m]`.
//!
//! ```
//! use voxfit::autodiff::Tape;
//! use voxfit::Matrix;
//!
//! let tape = Tape::new();
//! let x = tape.param(Matrix::column(vec![1.0, 2.0, 3.0])).unwrap();
//! let loss = tape.sum_all(tape.square(x));
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().as_slice(), &[2.0, 4.0, 6.0]);
//! ```

mod ops;

use std::cell::{Ref, RefCell};
use std::fmt;
use std::sync::Arc;

pub use ops::{LinearOperator, ScalarFn};

use crate::error::{bail, Result};
use crate::matrix::Matrix;
use ops::Op;

/// Smallest denominator magnitude admitted by [`Tape::div`].
pub const DIV_GUARD: f64 = 1e-30;

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    idx: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Operation record. Single-owner: a fit builds and consumes its own tape.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.len()).finish()
    }
}

/// Gradients of the root with respect to every differentiable leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// `None` for constants and for leaves the root does not depend on.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.idx).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.idx).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops all records; previously issued `Var`s become invalid.
    pub fn reset(&self) {
        self.nodes.borrow_mut().clear();
    }

    fn push(&self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let v = Var { idx: nodes.len(), rows: value.rows(), cols: value.cols() };
        nodes.push(Node { value, op, needs_grad });
        v
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes.borrow()[v.idx].needs_grad
    }

    /// Records a leaf. Gradients accumulate for it iff `requires_grad`.
    pub fn lift(&self, values: Matrix, requires_grad: bool) -> Result<Var> {
        if !values.is_finite() {
            bail!(Domain, "leaf values must be finite");
        }
        Ok(self.push(values, Op::Leaf, requires_grad))
    }

    pub fn param(&self, values: Matrix) -> Result<Var> {
        self.lift(values, true)
    }

    pub fn constant(&self, values: Matrix) -> Result<Var> {
        self.lift(values, false)
    }

    pub fn scalar(&self, value: f64) -> Result<Var> {
        self.lift(Matrix::scalar(value), false)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Matrix> {
        Ref::map(self.nodes.borrow(), |n| &n[v.idx].value)
    }

    /// Value of a `1 x 1` variable.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.value(v).as_slice()[0]
    }

    /// Back-propagates from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if !root.is_scalar() {
            bail!(Contract, "backward needs a 1x1 root, got {:?}", root.shape());
        }
        let nodes = self.nodes.borrow();
        if root.idx >= nodes.len() {
            bail!(Contract, "root does not belong to this tape");
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; root.idx + 1];
        if nodes[root.idx].needs_grad {
            grads[root.idx] = Some(Matrix::scalar(1.0));
        }
        let mut out: Vec<Option<Matrix>> = vec![None; nodes.len()];
        for i in (0..=root.idx).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if let Op::Leaf = node.op {
                out[i] = Some(g);
                continue;
            }
            ops::backprop(&nodes, i, &g, &mut |input: usize, contrib: Matrix| {
                if !nodes[input].needs_grad {
                    return;
                }
                match &mut grads[input] {
                    Some(acc) => {
                        for (a, c) in acc.as_mut_slice().iter_mut().zip(contrib.as_slice()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            });
        }
        Ok(Gradients { grads: out })
    }
}

/// Shared handle used by regularizer hooks and linear operators.
pub type SharedOperator = Arc<dyn LinearOperator>;

#[cfg(test)]
mod tests;
