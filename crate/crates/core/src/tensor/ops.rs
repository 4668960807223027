//! Forward implementations and adjoints for every tape op.

use super::{
    Activation, Op, ReduceKind, Shape, Tape, TapeInner, Tensor, TensorError, LAYER_NORM_EPS,
};

/// dst (m x n) += scale * a (m x k) . b (k x n)
fn acc_ab(dst: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize, scale: f64) {
    for i in 0..m {
        for l in 0..k {
            let av = scale * a[i * k + l];
            let row = &b[l * n..(l + 1) * n];
            let out = &mut dst[i * n..(i + 1) * n];
            for j in 0..n {
                out[j] += av * row[j];
            }
        }
    }
}

/// dst (m x k) += scale * a (m x n) . b^T, with b stored as (k x n)
fn acc_abt(dst: &mut [f64], a: &[f64], b: &[f64], m: usize, n: usize, k: usize, scale: f64) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for l in 0..k {
            let brow = &b[l * n..(l + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += arow[j] * brow[j];
            }
            dst[i * k + l] += scale * s;
        }
    }
}

/// dst (k x n) += scale * a^T . b, with a stored as (m x k) and b as (m x n)
fn acc_atb(dst: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize, scale: f64) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for l in 0..k {
            let av = scale * a[i * k + l];
            let out = &mut dst[l * n..(l + 1) * n];
            for j in 0..n {
                out[j] += av * brow[j];
            }
        }
    }
}

fn shape_err(op: &'static str, left: Shape, right: Shape) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left_rows: left.rows,
        left_cols: left.cols,
        right_rows: right.rows,
        right_cols: right.cols,
    }
}

// add and mul return Results and take tensor handles by value; the operator
// traits would not fit, fallible methods are the API.
#[allow(clippy::should_implement_trait)]
impl<'t> Tensor<'t> {
    /// Standard matrix product; inner dimensions must agree.
    pub fn matmul(self, other: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.tape.same_tape(other.tape)?;
        let sa = self.tape.shape_of(self.id);
        let sb = self.tape.shape_of(other.id);
        if sa.cols != sb.rows {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa.rows, sa.cols, sb.cols);
        let (value, rg) = {
            let inner = self.tape.inner.borrow();
            let mut out = vec![0.0; m * n];
            acc_ab(
                &mut out,
                &inner.values[self.id],
                &inner.values[other.id],
                m,
                k,
                n,
                1.0,
            );
            let rg = inner.grads[self.id].is_some() || inner.grads[other.id].is_some();
            (out, rg)
        };
        self.tape
            .record(m, n, value, rg, "matmul", |out| Op::MatMul {
                a: self.id,
                b: other.id,
                out,
            })
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(self, other: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.tape.same_tape(other.tape)?;
        let sa = self.tape.shape_of(self.id);
        let sb = self.tape.shape_of(other.id);
        if sa.rows != sb.rows || sa.cols != sb.cols {
            return Err(shape_err("add", sa, sb));
        }
        let (value, rg) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.values[self.id];
            let b = &inner.values[other.id];
            let out: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            let rg = inner.grads[self.id].is_some() || inner.grads[other.id].is_some();
            (out, rg)
        };
        self.tape
            .record(sa.rows, sa.cols, value, rg, "add", |out| Op::Add {
                a: self.id,
                b: other.id,
                out,
            })
    }

    /// Adds a 1 x n bias row to every row of an m x n tensor. The only
    /// broadcast the engine supports.
    pub fn add_bias(self, bias: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.tape.same_tape(bias.tape)?;
        let sa = self.tape.shape_of(self.id);
        let sb = self.tape.shape_of(bias.id);
        if sb.rows != 1 || sb.cols != sa.cols {
            return Err(shape_err("add_bias", sa, sb));
        }
        let (value, rg) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.values[self.id];
            let b = &inner.values[bias.id];
            let mut out = vec![0.0; sa.len()];
            for i in 0..sa.rows {
                for j in 0..sa.cols {
                    out[i * sa.cols + j] = a[i * sa.cols + j] + b[j];
                }
            }
            let rg = inner.grads[self.id].is_some() || inner.grads[bias.id].is_some();
            (out, rg)
        };
        self.tape
            .record(sa.rows, sa.cols, value, rg, "add_bias", |out| Op::AddBias {
                a: self.id,
                bias: bias.id,
                out,
            })
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(self, other: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.tape.same_tape(other.tape)?;
        let sa = self.tape.shape_of(self.id);
        let sb = self.tape.shape_of(other.id);
        if sa.rows != sb.rows || sa.cols != sb.cols {
            return Err(shape_err("mul", sa, sb));
        }
        let (value, rg) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.values[self.id];
            let b = &inner.values[other.id];
            let out: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
            let rg = inner.grads[self.id].is_some() || inner.grads[other.id].is_some();
            (out, rg)
        };
        self.tape
            .record(sa.rows, sa.cols, value, rg, "mul", |out| Op::Mul {
                a: self.id,
                b: other.id,
                out,
            })
    }

    /// scale * x + shift, elementwise with scalar constants.
    pub fn affine(self, scale: f64, shift: f64) -> Result<Tensor<'t>, TensorError> {
        if !scale.is_finite() || !shift.is_finite() {
            return Err(TensorError::NonFinite { op: "affine" });
        }
        let s = self.tape.shape_of(self.id);
        let (value, rg) = {
            let inner = self.tape.inner.borrow();
            let out: Vec<f64> = inner.values[self.id]
                .iter()
                .map(|x| scale * x + shift)
                .collect();
            (out, inner.grads[self.id].is_some())
        };
        self.tape
            .record(s.rows, s.cols, value, rg, "affine", |out| Op::Affine {
                x: self.id,
                scale,
                out,
            })
    }

    pub fn activation(self, kind: Activation) -> Result<Tensor<'t>, TensorError> {
        kind.validate()?;
        let s = self.tape.shape_of(self.id);
        let (value, rg) = {
            let inner = self.tape.inner.borrow();
            let out: Vec<f64> = inner.values[self.id]
                .iter()
                .map(|&x| kind.eval(x))
                .collect();
            (out, inner.grads[self.id].is_some())
        };
        self.tape
            .record(s.rows, s.cols, value, rg, "activation", |out| {
                Op::Activation {
                    x: self.id,
                    kind,
                    out,
                }
            })
    }

    /// Mean over all elements of the squared differences, so the loss does
    /// not scale with batch size or feature width. The target must be a
    /// constant.
    pub fn mse_loss(self, target: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.tape.same_tape(target.tape)?;
        let sp = self.tape.shape_of(self.id);
        let st = self.tape.shape_of(target.id);
        if sp.rows != st.rows || sp.cols != st.cols {
            return Err(shape_err("mse_loss", sp, st));
        }
        if self.tape.requires_grad_of(target.id) {
            return Err(TensorError::TargetRequiresGrad);
        }
        let (value, rg) = {
            let inner = self.tape.inner.borrow();
            let p = &inner.values[self.id];
            let t = &inner.values[target.id];
            let n = p.len() as f64;
            let sum: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
            (vec![sum / n], inner.grads[self.id].is_some())
        };
        self.tape
            .record(1, 1, value, rg, "mse_loss", |out| Op::MseLoss {
                pred: self.id,
                target: target.id,
                out,
            })
    }

    /// Mean or sum along an axis; axis 0 collapses rows into a 1 x n row,
    /// axis 1 collapses columns into an m x 1 column.
    pub fn reduce(self, kind: ReduceKind, axis: usize) -> Result<Tensor<'t>, TensorError> {
        if axis > 1 {
            return Err(TensorError::AxisOutOfRange { op: "reduce", axis });
        }
        let s = self.tape.shape_of(self.id);
        let (rows, cols) = if axis == 0 { (1, s.cols) } else { (s.rows, 1) };
        let (value, rg) = {
            let inner = self.tape.inner.borrow();
            let x = &inner.values[self.id];
            let mut out = vec![0.0; rows * cols];
            if axis == 0 {
                for i in 0..s.rows {
                    for j in 0..s.cols {
                        out[j] += x[i * s.cols + j];
                    }
                }
                if kind == ReduceKind::Mean {
                    for v in &mut out {
                        *v /= s.rows as f64;
                    }
                }
            } else {
                for i in 0..s.rows {
                    for j in 0..s.cols {
                        out[i] += x[i * s.cols + j];
                    }
                }
                if kind == ReduceKind::Mean {
                    for v in &mut out {
                        *v /= s.cols as f64;
                    }
                }
            }
            (out, inner.grads[self.id].is_some())
        };
        self.tape
            .record(rows, cols, value, rg, "reduce", |out| Op::Reduce {
                x: self.id,
                kind,
                axis,
                out,
            })
    }

    /// Numerically stable softmax along an axis (1 = within each row).
    pub fn softmax(self, axis: usize) -> Result<Tensor<'t>, TensorError> {
        if axis > 1 {
            return Err(TensorError::AxisOutOfRange {
                op: "softmax",
                axis,
            });
        }
        let s = self.tape.shape_of(self.id);
        let (value, rg) = {
            let inner = self.tape.inner.borrow();
            let x = &inner.values[self.id];
            let mut out = vec![0.0; s.len()];
            if axis == 1 {
                for i in 0..s.rows {
                    softmax_slice(
                        &x[i * s.cols..(i + 1) * s.cols],
                        &mut out[i * s.cols..(i + 1) * s.cols],
                    );
                }
            } else {
                let mut col_in = vec![0.0; s.rows];
                let mut col_out = vec![0.0; s.rows];
                for j in 0..s.cols {
                    for i in 0..s.rows {
                        col_in[i] = x[i * s.cols + j];
                    }
                    softmax_slice(&col_in, &mut col_out);
                    for i in 0..s.rows {
                        out[i * s.cols + j] = col_out[i];
                    }
                }
            }
            (out, inner.grads[self.id].is_some())
        };
        self.tape
            .record(s.rows, s.cols, value, rg, "softmax", |out| Op::Softmax {
                x: self.id,
                axis,
                out,
            })
    }

    /// Standardizes each row to mean 0 / variance 1, then applies the
    /// per-column gain and bias (both 1 x n).
    pub fn layer_norm(self, gain: Tensor<'t>, bias: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.tape.same_tape(gain.tape)?;
        self.tape.same_tape(bias.tape)?;
        let s = self.tape.shape_of(self.id);
        let sg = self.tape.shape_of(gain.id);
        let sb = self.tape.shape_of(bias.id);
        if sg.rows != 1 || sg.cols != s.cols {
            return Err(shape_err("layer_norm", s, sg));
        }
        if sb.rows != 1 || sb.cols != s.cols {
            return Err(shape_err("layer_norm", s, sb));
        }
        let (value, rg) = {
            let inner = self.tape.inner.borrow();
            let x = &inner.values[self.id];
            let g = &inner.values[gain.id];
            let b = &inner.values[bias.id];
            let mut out = vec![0.0; s.len()];
            for i in 0..s.rows {
                let row = &x[i * s.cols..(i + 1) * s.cols];
                let (mean, inv) = row_standardize(row);
                for j in 0..s.cols {
                    out[i * s.cols + j] = g[j] * ((row[j] - mean) * inv) + b[j];
                }
            }
            let rg = inner.grads[self.id].is_some()
                || inner.grads[gain.id].is_some()
                || inner.grads[bias.id].is_some();
            (out, rg)
        };
        self.tape
            .record(s.rows, s.cols, value, rg, "layer_norm", |out| {
                Op::LayerNorm {
                    x: self.id,
                    gain: gain.id,
                    bias: bias.id,
                    out,
                }
            })
    }

    pub fn transpose(self) -> Result<Tensor<'t>, TensorError> {
        let s = self.tape.shape_of(self.id);
        let (value, rg) = {
            let inner = self.tape.inner.borrow();
            let x = &inner.values[self.id];
            let mut out = vec![0.0; s.len()];
            for i in 0..s.rows {
                for j in 0..s.cols {
                    out[j * s.rows + i] = x[i * s.cols + j];
                }
            }
            (out, inner.grads[self.id].is_some())
        };
        self.tape
            .record(s.cols, s.rows, value, rg, "transpose", |out| {
                Op::Transpose { x: self.id, out }
            })
    }

    /// Copies columns `start .. start + width` into a new tensor.
    pub fn slice_cols(self, start: usize, width: usize) -> Result<Tensor<'t>, TensorError> {
        let s = self.tape.shape_of(self.id);
        if width == 0 || start + width > s.cols {
            return Err(TensorError::Invalid {
                op: "slice_cols",
                msg: format!("range {}..{} out of 0..{}", start, start + width, s.cols),
            });
        }
        let (value, rg) = {
            let inner = self.tape.inner.borrow();
            let x = &inner.values[self.id];
            let mut out = vec![0.0; s.rows * width];
            for i in 0..s.rows {
                out[i * width..(i + 1) * width]
                    .copy_from_slice(&x[i * s.cols + start..i * s.cols + start + width]);
            }
            (out, inner.grads[self.id].is_some())
        };
        self.tape
            .record(s.rows, width, value, rg, "slice_cols", |out| {
                Op::SliceCols {
                    x: self.id,
                    start,
                    out,
                }
            })
    }

    /// Replays adjoints in reverse op order, accumulating into every
    /// reachable `requires_grad` leaf. Consumes the tape: a second call is
    /// an error.
    pub fn backward(self) -> Result<(), TensorError> {
        let s = self.tape.shape_of(self.id);
        if s.rows != 1 || s.cols != 1 {
            return Err(TensorError::NonScalarLoss {
                rows: s.rows,
                cols: s.cols,
            });
        }
        {
            let inner = self.tape.inner.borrow();
            if inner.consumed {
                return Err(TensorError::TapeConsumed);
            }
            if inner.grads[self.id].is_none() {
                return Err(TensorError::DetachedLoss);
            }
        }
        self.tape.run_backward(self.id);
        Ok(())
    }
}

fn softmax_slice(x: &[f64], out: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        let e = (v - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Returns (mean, 1 / sqrt(var + eps)) for one row, biased variance.
fn row_standardize(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

impl Tape {
    fn nary_shape_check(
        &self,
        op: &'static str,
        parts: &[Tensor<'_>],
    ) -> Result<(Shape, bool), TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Invalid {
                op,
                msg: "needs at least one input".into(),
            });
        }
        let mut rg = false;
        for p in parts {
            self.same_tape(p.tape)?;
            rg |= self.requires_grad_of(p.id);
        }
        Ok((self.shape_of(parts[0].id), rg))
    }

    /// Stacks tensors with equal column counts on top of each other.
    pub fn concat_rows<'t>(&'t self, parts: &[Tensor<'t>]) -> Result<Tensor<'t>, TensorError> {
        let (first, rg) = self.nary_shape_check("concat_rows", parts)?;
        let mut rows = 0;
        for p in parts {
            let s = self.shape_of(p.id);
            if s.cols != first.cols {
                return Err(shape_err("concat_rows", first, s));
            }
            rows += s.rows;
        }
        let value = {
            let inner = self.inner.borrow();
            let mut out = Vec::with_capacity(rows * first.cols);
            for p in parts {
                out.extend_from_slice(&inner.values[p.id]);
            }
            out
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        self.record(rows, first.cols, value, rg, "concat_rows", |out| {
            Op::ConcatRows { parts: ids, out }
        })
    }

    /// Stacks tensors with equal row counts side by side.
    pub fn concat_cols<'t>(&'t self, parts: &[Tensor<'t>]) -> Result<Tensor<'t>, TensorError> {
        let (first, rg) = self.nary_shape_check("concat_cols", parts)?;
        let mut cols = 0;
        for p in parts {
            let s = self.shape_of(p.id);
            if s.rows != first.rows {
                return Err(shape_err("concat_cols", first, s));
            }
            cols += s.cols;
        }
        let value = {
            let inner = self.inner.borrow();
            let mut out = vec![0.0; first.rows * cols];
            let mut offset = 0;
            for p in parts {
                let s = self.shape_of(p.id);
                let v = &inner.values[p.id];
                for i in 0..first.rows {
                    out[i * cols + offset..i * cols + offset + s.cols]
                        .copy_from_slice(&v[i * s.cols..(i + 1) * s.cols]);
                }
                offset += s.cols;
            }
            out
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        self.record(first.rows, cols, value, rg, "concat_cols", |out| {
            Op::ConcatCols { parts: ids, out }
        })
    }

    fn seq_check<'t>(
        &'t self,
        op: &'static str,
        steps: &[Tensor<'t>],
        lengths: &[usize],
    ) -> Result<(Shape, bool), TensorError> {
        let (first, rg) = self.nary_shape_check(op, steps)?;
        for s in steps {
            let sh = self.shape_of(s.id);
            if sh.rows != first.rows || sh.cols != first.cols {
                return Err(shape_err(op, first, sh));
            }
        }
        if lengths.len() != first.rows {
            return Err(TensorError::Invalid {
                op,
                msg: format!("{} lengths for {} rows", lengths.len(), first.rows),
            });
        }
        for (i, &l) in lengths.iter().enumerate() {
            if l == 0 || l > steps.len() {
                return Err(TensorError::Invalid {
                    op,
                    msg: format!("length {} of row {} outside 1..={}", l, i, steps.len()),
                });
            }
        }
        Ok((first, rg))
    }

    /// Per-row read of a time-major sequence at each row's true last step,
    /// so right padding never reaches the output.
    pub fn seq_last<'t>(
        &'t self,
        steps: &[Tensor<'t>],
        lengths: &[usize],
    ) -> Result<Tensor<'t>, TensorError> {
        let (shape, rg) = self.seq_check("seq_last", steps, lengths)?;
        let value = {
            let inner = self.inner.borrow();
            let mut out = vec![0.0; shape.len()];
            for (i, &l) in lengths.iter().enumerate() {
                let src = &inner.values[steps[l - 1].id][i * shape.cols..(i + 1) * shape.cols];
                out[i * shape.cols..(i + 1) * shape.cols].copy_from_slice(src);
            }
            out
        };
        let ids: Vec<usize> = steps.iter().map(|s| s.id).collect();
        let lens = lengths.to_vec();
        self.record(shape.rows, shape.cols, value, rg, "seq_last", |out| {
            Op::SeqLast {
                steps: ids,
                lengths: lens,
                out,
            }
        })
    }

    /// Per-row mean of a time-major sequence over each row's true length.
    pub fn seq_mean<'t>(
        &'t self,
        steps: &[Tensor<'t>],
        lengths: &[usize],
    ) -> Result<Tensor<'t>, TensorError> {
        let (shape, rg) = self.seq_check("seq_mean", steps, lengths)?;
        let value = {
            let inner = self.inner.borrow();
            let mut out = vec![0.0; shape.len()];
            for (i, &l) in lengths.iter().enumerate() {
                for step in steps.iter().take(l) {
                    let src = &inner.values[step.id][i * shape.cols..(i + 1) * shape.cols];
                    for j in 0..shape.cols {
                        out[i * shape.cols + j] += src[j];
                    }
                }
                for j in 0..shape.cols {
                    out[i * shape.cols + j] /= l as f64;
                }
            }
            out
        };
        let ids: Vec<usize> = steps.iter().map(|s| s.id).collect();
        let lens = lengths.to_vec();
        self.record(shape.rows, shape.cols, value, rg, "seq_mean", |out| {
            Op::SeqMean {
                steps: ids,
                lengths: lens,
                out,
            }
        })
    }

    pub(super) fn run_backward(&self, loss_id: usize) {
        let fault = self.fault_scale.get();
        let mut borrow = self.inner.borrow_mut();
        let inner: &mut TapeInner = &mut borrow;
        inner.consumed = true;
        if let Some(g) = inner.grads[loss_id].as_mut() {
            g[0] = 1.0;
        }
        let TapeInner {
            shapes,
            values,
            grads,
            ops,
            ..
        } = inner;

        for op in ops.iter().rev() {
            match op {
                Op::MatMul { a, b, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    let sa = shapes[*a];
                    let sb = shapes[*b];
                    let (m, k, n) = (sa.rows, sa.cols, sb.cols);
                    if grads[*a].is_some() {
                        let vb = values[*b].clone();
                        let ga = grads[*a].as_mut().unwrap();
                        acc_abt(ga, &gout, &vb, m, n, k, fault);
                    }
                    if grads[*b].is_some() {
                        let va = values[*a].clone();
                        let gb = grads[*b].as_mut().unwrap();
                        acc_atb(gb, &va, &gout, m, k, n, fault);
                    }
                }
                Op::Add { a, b, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    for id in [a, b] {
                        if let Some(g) = grads[*id].as_mut() {
                            for (d, s) in g.iter_mut().zip(&gout) {
                                *d += fault * s;
                            }
                        }
                    }
                }
                Op::AddBias { a, bias, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    let s = shapes[*a];
                    if let Some(g) = grads[*a].as_mut() {
                        for (d, src) in g.iter_mut().zip(&gout) {
                            *d += fault * src;
                        }
                    }
                    if let Some(g) = grads[*bias].as_mut() {
                        for i in 0..s.rows {
                            for j in 0..s.cols {
                                g[j] += fault * gout[i * s.cols + j];
                            }
                        }
                    }
                }
                Op::Mul { a, b, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    if grads[*a].is_some() {
                        let vb = values[*b].clone();
                        let ga = grads[*a].as_mut().unwrap();
                        for i in 0..gout.len() {
                            ga[i] += fault * gout[i] * vb[i];
                        }
                    }
                    if grads[*b].is_some() {
                        let va = values[*a].clone();
                        let gb = grads[*b].as_mut().unwrap();
                        for i in 0..gout.len() {
                            gb[i] += fault * gout[i] * va[i];
                        }
                    }
                }
                Op::Affine { x, scale, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    if let Some(g) = grads[*x].as_mut() {
                        for (d, src) in g.iter_mut().zip(&gout) {
                            *d += fault * scale * src;
                        }
                    }
                }
                Op::Activation { x, kind, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    if grads[*x].is_some() {
                        let vx = values[*x].clone();
                        let vy = values[*out].clone();
                        let gx = grads[*x].as_mut().unwrap();
                        for i in 0..gout.len() {
                            gx[i] += fault * gout[i] * kind.slope(vx[i], vy[i]);
                        }
                    }
                }
                Op::MseLoss { pred, target, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    if grads[*pred].is_some() {
                        let vp = values[*pred].clone();
                        let vt = values[*target].clone();
                        let n = vp.len() as f64;
                        let gp = grads[*pred].as_mut().unwrap();
                        for i in 0..vp.len() {
                            gp[i] += fault * gout[0] * 2.0 * (vp[i] - vt[i]) / n;
                        }
                    }
                }
                Op::Reduce { x, kind, axis, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    let s = shapes[*x];
                    if let Some(gx) = grads[*x].as_mut() {
                        let denom = match (kind, axis) {
                            (ReduceKind::Mean, 0) => s.rows as f64,
                            (ReduceKind::Mean, _) => s.cols as f64,
                            (ReduceKind::Sum, _) => 1.0,
                        };
                        for i in 0..s.rows {
                            for j in 0..s.cols {
                                let g = if *axis == 0 { gout[j] } else { gout[i] };
                                gx[i * s.cols + j] += fault * g / denom;
                            }
                        }
                    }
                }
                Op::Softmax { x, axis, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    if grads[*x].is_some() {
                        let y = values[*out].clone();
                        let s = shapes[*x];
                        let gx = grads[*x].as_mut().unwrap();
                        if *axis == 1 {
                            for i in 0..s.rows {
                                let base = i * s.cols;
                                let mut dot = 0.0;
                                for j in 0..s.cols {
                                    dot += gout[base + j] * y[base + j];
                                }
                                for j in 0..s.cols {
                                    gx[base + j] += fault * y[base + j] * (gout[base + j] - dot);
                                }
                            }
                        } else {
                            for j in 0..s.cols {
                                let mut dot = 0.0;
                                for i in 0..s.rows {
                                    dot += gout[i * s.cols + j] * y[i * s.cols + j];
                                }
                                for i in 0..s.rows {
                                    gx[i * s.cols + j] +=
                                        fault * y[i * s.cols + j] * (gout[i * s.cols + j] - dot);
                                }
                            }
                        }
                    }
                }
                Op::LayerNorm { x, gain, bias, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    let s = shapes[*x];
                    let vx = values[*x].clone();
                    let vg = values[*gain].clone();
                    let n = s.cols as f64;
                    for i in 0..s.rows {
                        let row = &vx[i * s.cols..(i + 1) * s.cols];
                        let (mean, inv) = row_standardize(row);
                        let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                        let grow = &gout[i * s.cols..(i + 1) * s.cols];
                        if let Some(gg) = grads[*gain].as_mut() {
                            for j in 0..s.cols {
                                gg[j] += fault * grow[j] * xhat[j];
                            }
                        }
                        if let Some(gb) = grads[*bias].as_mut() {
                            for j in 0..s.cols {
                                gb[j] += fault * grow[j];
                            }
                        }
                        if grads[*x].is_some() {
                            let dxhat: Vec<f64> = (0..s.cols).map(|j| grow[j] * vg[j]).collect();
                            let m1 = dxhat.iter().sum::<f64>() / n;
                            let m2 = dxhat.iter().zip(&xhat).map(|(d, h)| d * h).sum::<f64>() / n;
                            let gx = grads[*x].as_mut().unwrap();
                            for j in 0..s.cols {
                                gx[i * s.cols + j] += fault * inv * (dxhat[j] - m1 - xhat[j] * m2);
                            }
                        }
                    }
                }
                Op::Transpose { x, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    let s = shapes[*x];
                    if let Some(gx) = grads[*x].as_mut() {
                        for i in 0..s.rows {
                            for j in 0..s.cols {
                                gx[i * s.cols + j] += fault * gout[j * s.rows + i];
                            }
                        }
                    }
                }
                Op::SliceCols { x, start, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    let s = shapes[*x];
                    let w = shapes[*out].cols;
                    if let Some(gx) = grads[*x].as_mut() {
                        for i in 0..s.rows {
                            for j in 0..w {
                                gx[i * s.cols + start + j] += fault * gout[i * w + j];
                            }
                        }
                    }
                }
                Op::ConcatCols { parts, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    let total = shapes[*out].cols;
                    let rows = shapes[*out].rows;
                    let mut offset = 0;
                    for p in parts {
                        let w = shapes[*p].cols;
                        if let Some(gp) = grads[*p].as_mut() {
                            for i in 0..rows {
                                for j in 0..w {
                                    gp[i * w + j] += fault * gout[i * total + offset + j];
                                }
                            }
                        }
                        offset += w;
                    }
                }
                Op::ConcatRows { parts, out } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    let cols = shapes[*out].cols;
                    let mut row = 0;
                    for p in parts {
                        let r = shapes[*p].rows;
                        if let Some(gp) = grads[*p].as_mut() {
                            for (d, s) in gp.iter_mut().zip(&gout[row * cols..(row + r) * cols]) {
                                *d += fault * s;
                            }
                        }
                        row += r;
                    }
                }
                Op::SeqLast {
                    steps,
                    lengths,
                    out,
                } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    let cols = shapes[*out].cols;
                    for (i, &l) in lengths.iter().enumerate() {
                        let id = steps[l - 1];
                        if let Some(g) = grads[id].as_mut() {
                            for j in 0..cols {
                                g[i * cols + j] += fault * gout[i * cols + j];
                            }
                        }
                    }
                }
                Op::SeqMean {
                    steps,
                    lengths,
                    out,
                } => {
                    let Some(gout) = grads[*out].clone() else {
                        continue;
                    };
                    let cols = shapes[*out].cols;
                    for (i, &l) in lengths.iter().enumerate() {
                        let w = 1.0 / l as f64;
                        for &id in steps.iter().take(l) {
                            if let Some(g) = grads[id].as_mut() {
                                for j in 0..cols {
                                    g[i * cols + j] += fault * w * gout[i * cols + j];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
