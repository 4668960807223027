//! Dense f64 matrices with reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation executed on tensors created from it and
//! replays the record in reverse on [`Tensor::backward`] to accumulate
//! gradients into the `requires_grad` leaves. The engine is deliberately
//! small: rank is at most 2 (a vector is a 1 x n row, a scalar is 1 x 1),
//! the only broadcast is the row-vector bias add, and every op checks its
//! output for non-finite values so a divergence is reported at the op that
//! produced it.
//!
//! Backward may be called once per tape; a second call is an error rather
//! than silent accumulation.

mod gradcheck;
mod ops;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};

use std::cell::{Cell, RefCell};

use thiserror::Error;

use crate::mat::Mat;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error(
        "{op}: shape mismatch, left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}"
    )]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("{op}: data length {got} does not match shape {rows}x{cols}")]
    DataLength {
        op: &'static str,
        rows: usize,
        cols: usize,
        got: usize,
    },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: axis {axis} out of range for a rank-2 tensor")]
    AxisOutOfRange { op: &'static str, axis: usize },
    #[error("backward needs a 1x1 loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("backward on a loss that does not require gradients")]
    DetachedLoss,
    #[error("backward already ran on this tape")]
    TapeConsumed,
    #[error("leaky_relu slope must be positive, got {alpha}")]
    BadLeakySlope { alpha: f64 },
    #[error("mse_loss target must not require gradients")]
    TargetRequiresGrad,
    #[error("tensors belong to different tapes")]
    TapeMismatch,
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
}

/// Elementwise activation kinds understood by [`Tensor::activation`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    pub(crate) fn validate(self) -> Result<(), TensorError> {
        match self {
            Activation::LeakyRelu(alpha) if alpha <= 0.0 => {
                Err(TensorError::BadLeakySlope { alpha })
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(alpha) => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
        }
    }

    /// Derivative given the input `x` and the already-computed output `y`.
    #[inline]
    fn slope(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(alpha) => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
        }
    }

    pub fn is_identity(self) -> bool {
        matches!(self, Activation::Identity)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Mean,
    Sum,
}

const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy)]
struct Shape {
    rows: usize,
    cols: usize,
}

impl Shape {
    fn len(self) -> usize {
        self.rows * self.cols
    }
}

pub(crate) enum Op {
    MatMul {
        a: usize,
        b: usize,
        out: usize,
    },
    Add {
        a: usize,
        b: usize,
        out: usize,
    },
    AddBias {
        a: usize,
        bias: usize,
        out: usize,
    },
    Mul {
        a: usize,
        b: usize,
        out: usize,
    },
    Affine {
        x: usize,
        scale: f64,
        out: usize,
    },
    Activation {
        x: usize,
        kind: Activation,
        out: usize,
    },
    MseLoss {
        pred: usize,
        target: usize,
        out: usize,
    },
    Reduce {
        x: usize,
        kind: ReduceKind,
        axis: usize,
        out: usize,
    },
    Softmax {
        x: usize,
        axis: usize,
        out: usize,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        out: usize,
    },
    Transpose {
        x: usize,
        out: usize,
    },
    SliceCols {
        x: usize,
        start: usize,
        out: usize,
    },
    ConcatCols {
        parts: Vec<usize>,
        out: usize,
    },
    ConcatRows {
        parts: Vec<usize>,
        out: usize,
    },
    SeqLast {
        steps: Vec<usize>,
        lengths: Vec<usize>,
        out: usize,
    },
    SeqMean {
        steps: Vec<usize>,
        lengths: Vec<usize>,
        out: usize,
    },
}

#[derive(Default)]
struct TapeInner {
    shapes: Vec<Shape>,
    values: Vec<Vec<f64>>,
    grads: Vec<Option<Vec<f64>>>,
    ops: Vec<Op>,
    consumed: bool,
}

/// Records a forward pass so adjoints can be replayed in reverse order.
///
/// A tape and the tensors created from it are confined to one logical thread
/// for the duration of a forward/backward pass; independent tapes share no
/// state.
pub struct Tape {
    inner: RefCell<TapeInner>,
    fault_scale: Cell<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            inner: RefCell::new(TapeInner::default()),
            fault_scale: Cell::new(1.0),
        }
    }

    /// Scales every adjoint contribution by `scale` during backward.
    ///
    /// This exists so the gradient-check harness can prove it detects broken
    /// adjoints; any value other than 1.0 makes every recorded derivative
    /// wrong on purpose.
    pub fn inject_adjoint_fault(&self, scale: f64) {
        self.fault_scale.set(scale);
    }

    pub fn leaf(
        &self,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        requires_grad: bool,
    ) -> Result<Tensor<'_>, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::DataLength {
                op: "leaf",
                rows,
                cols,
                got: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op: "leaf" });
        }
        let mut inner = self.inner.borrow_mut();
        let id = inner.shapes.len();
        inner.shapes.push(Shape { rows, cols });
        let len = data.len();
        inner.values.push(data);
        inner.grads.push(if requires_grad {
            Some(vec![0.0; len])
        } else {
            None
        });
        Ok(Tensor { tape: self, id })
    }

    pub fn constant(
        &self,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    ) -> Result<Tensor<'_>, TensorError> {
        self.leaf(rows, cols, data, false)
    }

    pub fn leaf_from(&self, m: &Mat, requires_grad: bool) -> Result<Tensor<'_>, TensorError> {
        self.leaf(m.rows(), m.cols(), m.data().to_vec(), requires_grad)
    }

    pub fn zeros(&self, rows: usize, cols: usize) -> Result<Tensor<'_>, TensorError> {
        self.constant(rows, cols, vec![0.0; rows * cols])
    }

    fn record(
        &self,
        rows: usize,
        cols: usize,
        value: Vec<f64>,
        requires_grad: bool,
        op_name: &'static str,
        make_op: impl FnOnce(usize) -> Op,
    ) -> Result<Tensor<'_>, TensorError> {
        debug_assert_eq!(value.len(), rows * cols);
        if !value.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let mut inner = self.inner.borrow_mut();
        let id = inner.shapes.len();
        inner.shapes.push(Shape { rows, cols });
        let len = value.len();
        inner.values.push(value);
        inner.grads.push(if requires_grad {
            Some(vec![0.0; len])
        } else {
            None
        });
        inner.ops.push(make_op(id));
        Ok(Tensor { tape: self, id })
    }

    fn shape_of(&self, id: usize) -> Shape {
        self.inner.borrow().shapes[id]
    }

    fn requires_grad_of(&self, id: usize) -> bool {
        self.inner.borrow().grads[id].is_some()
    }

    fn same_tape(&self, other: &Tape) -> Result<(), TensorError> {
        if std::ptr::eq(self, other) {
            Ok(())
        } else {
            Err(TensorError::TapeMismatch)
        }
    }
}

/// Handle to a value stored on a [`Tape`]. Cheap to copy; the data lives on
/// the tape and is immutable once created (gradient buffers aside).
#[derive(Clone, Copy)]
pub struct Tensor<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = self.tape.shape_of(self.id);
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("rows", &s.rows)
            .field("cols", &s.cols)
            .finish()
    }
}

impl<'t> Tensor<'t> {
    pub fn rows(self) -> usize {
        self.tape.shape_of(self.id).rows
    }

    pub fn cols(self) -> usize {
        self.tape.shape_of(self.id).cols
    }

    pub fn len(self) -> usize {
        self.tape.shape_of(self.id).len()
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(self) -> bool {
        self.tape.requires_grad_of(self.id)
    }

    pub fn value(self) -> Vec<f64> {
        self.tape.inner.borrow().values[self.id].clone()
    }

    pub fn value_mat(self) -> Mat {
        let s = self.tape.shape_of(self.id);
        Mat::from_vec(s.rows, s.cols, self.value())
    }

    pub fn scalar_value(self) -> Result<f64, TensorError> {
        let s = self.tape.shape_of(self.id);
        if s.rows != 1 || s.cols != 1 {
            return Err(TensorError::NonScalarLoss {
                rows: s.rows,
                cols: s.cols,
            });
        }
        Ok(self.tape.inner.borrow().values[self.id][0])
    }

    /// The accumulated gradient, present only for `requires_grad` tensors.
    pub fn grad(self) -> Option<Vec<f64>> {
        self.tape.inner.borrow().grads[self.id].clone()
    }

    pub fn grad_mat(self) -> Option<Mat> {
        let s = self.tape.shape_of(self.id);
        self.grad().map(|g| Mat::from_vec(s.rows, s.cols, g))
    }
}

#[cfg(test)]
mod tests;
