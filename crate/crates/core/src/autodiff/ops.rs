use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use super::tape::{Op, Var};
use crate::math::{sigmoid, softplus};
use crate::error::{Result, RhinoError};
use crate::graph::expm;
use crate::scalar::Scalar;

fn broadcast_shape(a: (usize, usize), b: (usize, usize), what: &str) -> Result<(usize, usize)> {
    if a == b {
        Ok(a)
    } else if a.1 == b.1 && (a.0 == 1 || b.0 == 1) {
        Ok((a.0.max(b.0), a.1))
    } else {
        Err(RhinoError::invalid(format!(
            "{what}: incompatible shapes {a:?} and {b:?}"
        )))
    }
}

fn same_tape<T: Scalar>(a: &Var<'_, T>, b: &Var<'_, T>) -> Result<()> {
    if std::ptr::eq(a.tape, b.tape) {
        Ok(())
    } else {
        Err(RhinoError::invalid("operands recorded on different tapes"))
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    fn unary(&self, f: impl Fn(&Array2<T>) -> Array2<T>, op: Op<T>) -> Var<'t, T> {
        let value = f(&self.value_ref());
        let needs = self.tape.needs_grad(self.id);
        self.tape.push(value, op, needs)
    }

    fn binary(
        &self,
        other: &Var<'t, T>,
        what: &str,
        f: impl Fn(&Array2<T>, &Array2<T>) -> Array2<T>,
        op: Op<T>,
    ) -> Result<Var<'t, T>> {
        same_tape(self, other)?;
        broadcast_shape(self.shape(), other.shape(), what)?;
        let value = {
            let a = self.value_ref();
            let b = other.value_ref();
            f(&a, &b)
        };
        let needs = self.tape.needs_grad(self.id) || self.tape.needs_grad(other.id);
        Ok(self.tape.push(value, op, needs))
    }

    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    pub fn div(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "div", |a, b| a / b, Op::Div(self.id, other.id))
    }

    /// Elementwise product with a constant mask (or any constant weights).
    pub fn mask(&self, mask: Array2<T>) -> Result<Var<'t, T>> {
        let m = self.tape.constant(mask);
        self.mul(&m)
    }

    pub fn neg(&self) -> Var<'t, T> {
        self.unary(|a| a.mapv(|x| -x), Op::Neg(self.id))
    }

    pub fn scale(&self, c: T) -> Var<'t, T> {
        self.unary(|a| a.mapv(|x| x * c), Op::Scale(self.id, c))
    }

    pub fn offset(&self, c: T) -> Var<'t, T> {
        self.unary(|a| a.mapv(|x| x + c), Op::Offset(self.id))
    }

    pub fn exp(&self) -> Var<'t, T> {
        self.unary(|a| a.mapv(|x| x.exp()), Op::Exp(self.id))
    }

    pub fn ln(&self) -> Var<'t, T> {
        self.unary(|a| a.mapv(|x| x.ln()), Op::Ln(self.id))
    }

    pub fn tanh(&self) -> Var<'t, T> {
        self.unary(|a| a.mapv(|x| x.tanh()), Op::Tanh(self.id))
    }

    pub fn relu(&self) -> Var<'t, T> {
        self.unary(|a| a.mapv(|x| x.max(T::zero())), Op::Relu(self.id))
    }

    pub fn sigmoid(&self) -> Var<'t, T> {
        self.unary(|a| a.mapv(sigmoid), Op::Sigmoid(self.id))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&self) -> Var<'t, T> {
        self.unary(|a| a.mapv(softplus), Op::Softplus(self.id))
    }

    pub fn sqrt(&self) -> Var<'t, T> {
        self.unary(|a| a.mapv(|x| x.sqrt()), Op::Sqrt(self.id))
    }

    pub fn square(&self) -> Var<'t, T> {
        self.unary(|a| a.mapv(|x| x * x), Op::Square(self.id))
    }

    /// Row-wise softmax.
    pub fn softmax(&self) -> Var<'t, T> {
        self.unary(
            |a| {
                let mut out = a.to_owned();
                for mut row in out.rows_mut() {
                    let m = row.fold(T::neg_infinity(), |m, &x| m.max(x));
                    row.mapv_inplace(|x| (x - m).exp());
                    let total = row.sum();
                    row.mapv_inplace(|x| x / total);
                }
                out
            },
            Op::Softmax(self.id),
        )
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&self) -> Var<'t, T> {
        self.unary(
            |a| {
                let lse = row_logsumexp(a.view());
                a - &lse
            },
            Op::LogSoftmax(self.id),
        )
    }

    /// Row-wise log-sum-exp, shape `rows x 1`.
    pub fn logsumexp(&self) -> Var<'t, T> {
        self.unary(|a| row_logsumexp(a.view()), Op::LogSumExp(self.id))
    }

    /// Row-wise standardization to zero mean and unit variance (no affine part).
    pub fn layer_norm(&self, eps: T) -> Var<'t, T> {
        self.unary(
            |a| {
                let n = T::from_usize(a.ncols()).unwrap();
                let mut out = a.to_owned();
                for mut row in out.rows_mut() {
                    let mean = row.sum() / n;
                    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
                    let inv = T::one() / (var + eps).sqrt();
                    row.mapv_inplace(|v| (v - mean) * inv);
                }
                out
            },
            Op::LayerNorm(self.id, eps),
        )
    }

    /// Sum of all entries, `1 x 1`.
    pub fn sum(&self) -> Var<'t, T> {
        self.unary(|a| Array2::from_elem((1, 1), a.sum()), Op::Sum(self.id))
    }

    pub fn mean(&self) -> Var<'t, T> {
        let n = T::from_usize(self.shape().0 * self.shape().1).unwrap();
        self.sum().scale(T::one() / n)
    }

    /// Sum over the leading dimension, `1 x cols`.
    pub fn sum_rows(&self) -> Var<'t, T> {
        self.unary(
            |a| a.sum_axis(Axis(0)).insert_axis(Axis(0)),
            Op::SumRows(self.id),
        )
    }

    /// Sum over the trailing dimension, `rows x 1`.
    pub fn sum_cols(&self) -> Var<'t, T> {
        self.unary(
            |a| a.sum_axis(Axis(1)).insert_axis(Axis(1)),
            Op::SumCols(self.id),
        )
    }

    pub fn matmul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        same_tape(self, other)?;
        let (a, b) = (self.shape(), other.shape());
        if a.1 != b.0 {
            return Err(RhinoError::invalid(format!(
                "matmul: inner dimensions differ {a:?} x {b:?}"
            )));
        }
        let value = self.value_ref().dot(&*other.value_ref());
        let needs = self.tape.needs_grad(self.id) || self.tape.needs_grad(other.id);
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), needs))
    }

    pub fn transpose(&self) -> Var<'t, T> {
        self.unary(|a| a.t().to_owned(), Op::Transpose(self.id))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var<'t, T>> {
        let cols = self.shape().1;
        if start > end || end > cols {
            return Err(RhinoError::invalid(format!(
                "slice_cols: range {start}..{end} out of bounds for {cols} columns"
            )));
        }
        Ok(self.unary(
            |a| a.slice(s![.., start..end]).to_owned(),
            Op::SliceCols(self.id, start),
        ))
    }

    /// Row-major reshape.
    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Var<'t, T>> {
        let (r, c) = self.shape();
        if r * c != rows * cols {
            return Err(RhinoError::invalid(format!(
                "reshape: cannot view {r}x{c} as {rows}x{cols}"
            )));
        }
        Ok(self.unary(
            |a| {
                let flat: Vec<T> = a.iter().copied().collect();
                Array2::from_shape_vec((rows, cols), flat).expect("reshape")
            },
            Op::Reshape(self.id),
        ))
    }

    /// Selects rows by index, repeating as needed.
    pub fn gather_rows(&self, index: Vec<usize>) -> Result<Var<'t, T>> {
        let rows = self.shape().0;
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(RhinoError::invalid(format!(
                "gather_rows: index {bad} out of range for {rows} rows"
            )));
        }
        let value = self.value_ref().select(Axis(0), &index);
        let needs = self.tape.needs_grad(self.id);
        Ok(self.tape.push(value, Op::GatherRows(self.id, index), needs))
    }

    /// Builds a `rows x cols` matrix whose entry `k` (row-major) is the
    /// flattened source entry `index[k]`, or zero for `None`.
    pub fn gather(&self, index: Vec<Option<usize>>, rows: usize, cols: usize) -> Result<Var<'t, T>> {
        if index.len() != rows * cols {
            return Err(RhinoError::invalid("gather: index length does not match shape"));
        }
        let value = {
            let src = self.value_ref();
            let n = src.len();
            let c = src.ncols();
            let mut out = Vec::with_capacity(index.len());
            for slot in &index {
                match slot {
                    Some(k) if *k < n => out.push(src[[k / c, k % c]]),
                    Some(k) => {
                        return Err(RhinoError::invalid(format!(
                            "gather: flat index {k} out of range for {n} entries"
                        )))
                    }
                    None => out.push(T::zero()),
                }
            }
            Array2::from_shape_vec((rows, cols), out).expect("gather shape")
        };
        let needs = self.tape.needs_grad(self.id);
        Ok(self.tape.push(value, Op::Gather(self.id, index), needs))
    }

    /// Applies one `d x m` matrix to each of `batch` stacked `m x f` blocks,
    /// returning the stacked `d x f` results.
    pub fn batched_left_matmul(&self, blocks: &Var<'t, T>, batch: usize) -> Result<Var<'t, T>> {
        same_tape(self, blocks)?;
        let (d, m) = self.shape();
        let (rows, f) = blocks.shape();
        if rows != m * batch {
            return Err(RhinoError::invalid(format!(
                "batched_left_matmul: {rows} rows is not {batch} blocks of {m}"
            )));
        }
        let value = {
            let left = self.value_ref();
            let right = blocks.value_ref();
            let mut out = Array2::zeros((d * batch, f));
            for k in 0..batch {
                out.slice_mut(s![k * d..(k + 1) * d, ..])
                    .assign(&left.dot(&right.slice(s![k * m..(k + 1) * m, ..])));
            }
            out
        };
        let needs = self.tape.needs_grad(self.id) || self.tape.needs_grad(blocks.id);
        Ok(self
            .tape
            .push(value, Op::BatchedLeftMatMul(self.id, blocks.id, batch), needs))
    }

    /// `trace(exp(M))` of a square matrix, `1 x 1`.
    pub fn trace_expm(&self) -> Result<Var<'t, T>> {
        let (r, c) = self.shape();
        if r != c {
            return Err(RhinoError::invalid("trace_expm: matrix must be square"));
        }
        let e = expm(&self.value_ref())?;
        let tr = e.diag().sum();
        let needs = self.tape.needs_grad(self.id);
        Ok(self
            .tape
            .push(Array2::from_elem((1, 1), tr), Op::TraceExpm(self.id, e), needs))
    }

    /// Forward value `hard`, gradient passed unchanged to `self`.
    pub fn straight_through(&self, hard: Array2<T>) -> Result<Var<'t, T>> {
        if hard.dim() != self.shape() {
            return Err(RhinoError::invalid("straight_through: shape mismatch"));
        }
        let needs = self.tape.needs_grad(self.id);
        Ok(self.tape.push(hard, Op::StraightThrough(self.id), needs))
    }

    /// Copy of the value with no gradient path.
    pub fn detach(&self) -> Var<'t, T> {
        self.tape.constant(self.value())
    }
}

impl<'t, T: Scalar> crate::autodiff::Tape<T> {
    pub fn concat_cols(&'t self, parts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        self.concat(parts, Axis(1))
    }

    pub fn concat_rows(&'t self, parts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        self.concat(parts, Axis(0))
    }

    fn concat(&'t self, parts: &[Var<'t, T>], axis: Axis) -> Result<Var<'t, T>> {
        if parts.is_empty() {
            return Err(RhinoError::invalid("concat of zero parts"));
        }
        for p in parts {
            if !std::ptr::eq(p.tape, self) {
                return Err(RhinoError::invalid("concat operand from another tape"));
            }
        }
        let value = {
            let nodes = self.nodes.borrow();
            let views: Vec<ArrayView2<T>> = parts.iter().map(|p| nodes[p.id].value.view()).collect();
            concatenate(axis, &views)
                .map_err(|e| RhinoError::invalid(format!("concat: {e}")))?
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let needs = ids.iter().any(|&i| self.needs_grad(i));
        let op = if axis == Axis(1) {
            Op::ConcatCols(ids)
        } else {
            Op::ConcatRows(ids)
        };
        Ok(self.push(value, op, needs))
    }
}

pub(crate) fn row_logsumexp<T: Scalar>(a: ArrayView2<T>) -> Array2<T> {
    let mut out = Array2::zeros((a.nrows(), 1));
    for (i, row) in a.rows().into_iter().enumerate() {
        let m = row.fold(T::neg_infinity(), |m, &x| m.max(x));
        let s: T = row.iter().map(|&x| (x - m).exp()).sum();
        out[[i, 0]] = m + s.ln();
    }
    out
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use crate::autodiff::Tape;

    #[test]
    fn add_and_matmul_values() {
        let tape = Tape::<f64>::new();
        let a = tape.constant(array![[1.0, 2.0]]);
        let b = tape.constant(array![[3.0, 4.0]]);
        assert_eq!(a.add(&b).unwrap().value(), array![[4.0, 6.0]]);

        let eye = tape.constant(array![[1.0, 0.0], [0.0, 1.0]]);
        let m = tape.constant(array![[5.0, 6.0], [7.0, 8.0]]);
        assert_eq!(eye.matmul(&m).unwrap().value(), array![[5.0, 6.0], [7.0, 8.0]]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(array![[0.0, 0.0, 0.0]]);
        for v in x.softmax().value() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_invalid_argument() {
        let tape = Tape::<f64>::new();
        let a = tape.constant(array![[1.0, 2.0]]);
        let b = tape.constant(array![[1.0, 2.0, 3.0]]);
        assert!(matches!(a.add(&b), Err(crate::RhinoError::InvalidArgument(_))));
        assert!(a.matmul(&b).is_err());
        assert!(a.reshape(3, 1).is_err());
    }

    #[test]
    fn square_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(array![[3.0]]);
        let loss = x.square();
        let g = tape.gradient(loss).unwrap();
        assert_eq!(g.wrt(x), array![[6.0]]);
    }

    #[test]
    fn relu_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(array![[-1.0, 2.0]]);
        let loss = x.relu().sum();
        let g = tape.gradient(loss).unwrap();
        assert_eq!(g.wrt(x), array![[0.0, 1.0]]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(array![[1.0, 2.0]]);
        assert!(tape.gradient(x.exp()).is_err());
    }

    #[test]
    fn row_broadcast_gradient_sums_batch() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let b = tape.leaf(array![[0.5, -0.5]]);
        let loss = x.mul(&b).unwrap().sum();
        let g = tape.gradient(loss).unwrap();
        assert_eq!(g.wrt(b), array![[9.0, 12.0]]);
    }

    #[test]
    fn straight_through_passes_soft_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(array![[0.3, 0.7]]);
        let soft = x.softmax();
        let hard = soft.straight_through(array![[0.0, 1.0]]).unwrap();
        assert_eq!(hard.value(), array![[0.0, 1.0]]);
        let w = tape.constant(array![[1.0, 2.0]]);
        let loss = hard.mul(&w).unwrap().sum();
        let g = tape.gradient(loss).unwrap().wrt(x);
        let s = soft.value();
        // d/dx sum(w * softmax(x)) = s * (w - s.w)
        let sw = s[[0, 0]] + 2.0 * s[[0, 1]];
        assert!((g[[0, 0]] - s[[0, 0]] * (1.0 - sw)).abs() < 1e-14);
        assert!((g[[0, 1]] - s[[0, 1]] * (2.0 - sw)).abs() < 1e-14);
    }
}
