use std::cell::{Ref, RefCell};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::numcore::{NumError, ParamId, ParamSet, Tensor2D};
use crate::scalar::Scalar;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

/// Entrywise operations exposed through [`Tape::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf(Option<ParamId>),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    Ln(Var),
    SoftmaxRows(Var),
    LayerNormRows(Var, T),
    Transpose(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Row(Var, usize),
    GatherRows(Var, Vec<Option<usize>>, Vec<T>),
    MeanRows(Var, Vec<usize>),
    Sum(Var),
    CrossEntropy(Var, usize),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor2D<T>,
    op: Op<T>,
}

/// Define-by-run recording of primitive operations. Backward walks the
/// recording in exact reverse order.
///
/// A tape is single-threaded; build one per forward pass.
#[derive(Debug)]
pub struct Tape<T> {
    id: u64,
    checked: bool,
    nodes: RefCell<Vec<Node<T>>>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Tensor2D<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `v`; `None` when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor2D<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx).and_then(Option::as_ref)
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    /// Finiteness checks follow `debug_assertions`: on in tests and debug
    /// builds, off in release training runs.
    pub fn new() -> Self {
        Self::with_checks(cfg!(debug_assertions))
    }

    pub fn with_checks(checked: bool) -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            checked,
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn is_checked(&self) -> bool {
        self.checked
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub fn contains(&self, v: Var) -> bool {
        v.tape == self.id && v.idx < self.len()
    }

    fn push(&self, value: Tensor2D<T>, op: Op<T>) -> Var {
        if self.checked {
            assert!(value.is_finite(), "non-finite value produced by {op:?}");
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self.id,
            idx: nodes.len() - 1,
        }
    }

    fn node(&self, v: Var) -> Ref<'_, Node<T>> {
        assert_eq!(v.tape, self.id, "variable recorded on a different tape");
        Ref::map(self.nodes.borrow(), |n| &n[v.idx])
    }

    fn val(&self, v: Var) -> Ref<'_, Tensor2D<T>> {
        Ref::map(self.node(v), |n| &n.value)
    }

    /// Copy of the recorded value.
    pub fn value(&self, v: Var) -> Tensor2D<T> {
        self.val(v).clone()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.val(v).shape()
    }

    /// Records a constant input; it receives a gradient but nothing is
    /// accumulated anywhere.
    pub fn constant(&self, value: Tensor2D<T>) -> Var {
        self.push(value, Op::Leaf(None))
    }

    /// Records the current value of a parameter. Its gradient is added to
    /// the parameter's accumulator on [`Tape::backward`].
    pub fn param(&self, params: &ParamSet<T>, id: ParamId) -> Var {
        self.push(params.value(id).clone(), Op::Leaf(Some(id)))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.val(a).matmul(&self.val(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn binary(&self, a: Var, b: Var, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor2D<T>, NumError> {
        let (x, y) = (self.val(a), self.val(b));
        x.expect_same_shape(&y, op)?;
        x.zip_map(&y, f)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Hadamard product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds a `1×n` row to every row of an `m×n` matrix. This is the only
    /// broadcasting form.
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var, NumError> {
        let out = self.row_broadcast(a, row, "add_row", |x, y| x + y)?;
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// Multiplies every row of `a` entrywise by a `1×n` row.
    pub fn mul_row(&self, a: Var, row: Var) -> Result<Var, NumError> {
        let out = self.row_broadcast(a, row, "mul_row", |x, y| x * y)?;
        Ok(self.push(out, Op::MulRow(a, row)))
    }

    fn row_broadcast(
        &self,
        a: Var,
        row: Var,
        op: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor2D<T>, NumError> {
        let (x, r) = (self.val(a), self.val(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(NumError::ShapeMismatch {
                op,
                left: x.shape(),
                right: r.shape(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(r.data()) {
                *o = f(*o, b);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, a: Var, factor: T) -> Var {
        let out = self.val(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor))
    }

    pub fn add_scalar(&self, a: Var, c: T) -> Var {
        let out = self.val(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let out = self.val(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let out = self.val(a).map(T::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&self, a: Var) -> Var {
        let out = self.val(a).map(|x| x.max(T::zero()));
        self.push(out, Op::Relu(a))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&self, a: Var) -> Var {
        let out = self.val(a).map(softplus);
        self.push(out, Op::Softplus(a))
    }

    pub fn ln(&self, a: Var) -> Var {
        let out = self.val(a).map(T::ln);
        self.push(out, Op::Ln(a))
    }

    pub fn elementwise(&self, op: ElementwiseOp, operands: &[Var]) -> Result<Var, NumError> {
        let arity = match op {
            ElementwiseOp::Add | ElementwiseOp::Mul => 2,
            _ => 1,
        };
        if operands.len() != arity {
            return Err(NumError::Arity {
                op: "elementwise",
                expected: arity,
                got: operands.len(),
            });
        }
        Ok(match op {
            ElementwiseOp::Add => self.add(operands[0], operands[1])?,
            ElementwiseOp::Mul => self.mul(operands[0], operands[1])?,
            ElementwiseOp::Sigmoid => self.sigmoid(operands[0]),
            ElementwiseOp::Tanh => self.tanh(operands[0]),
            ElementwiseOp::Relu => self.relu(operands[0]),
        })
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self, a: Var) -> Var {
        let out = softmax_rows(&self.val(a));
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Per-row standardization `(x - mean) / sqrt(var + eps)`, no affine.
    pub fn layer_norm_rows(&self, a: Var, eps: T) -> Var {
        let x = self.val(a);
        let mut out = x.clone();
        for r in 0..x.rows() {
            let (mean, inv_std) = row_moments(x.row(r), eps);
            for o in out.row_mut(r) {
                *o = (*o - mean) * inv_std;
            }
        }
        drop(x);
        self.push(out, Op::LayerNormRows(a, eps))
    }

    pub fn transpose(&self, a: Var) -> Var {
        let out = self.val(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Result<Var, NumError> {
        let x = self.val(a);
        if start >= end || end > x.cols() {
            return Err(NumError::OutOfRange {
                op: "slice_cols",
                index: end,
                bound: x.cols(),
            });
        }
        let out = Tensor2D::from_fn(x.rows(), end - start, |r, c| x[(r, start + c)]);
        drop(x);
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var, NumError> {
        let first = parts.first().ok_or(NumError::Arity {
            op: "concat_cols",
            expected: 1,
            got: 0,
        })?;
        let rows = self.shape(*first).0;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != rows {
                return Err(NumError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(*first),
                    right: s,
                });
            }
            cols += s.1;
        }
        let mut out = Tensor2D::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let x = self.val(p);
            for r in 0..rows {
                out.row_mut(r)[offset..offset + x.cols()].copy_from_slice(x.row(r));
            }
            offset += x.cols();
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var, NumError> {
        let first = parts.first().ok_or(NumError::Arity {
            op: "concat_rows",
            expected: 1,
            got: 0,
        })?;
        let cols = self.shape(*first).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let x = self.val(p);
            if x.cols() != cols {
                return Err(NumError::ShapeMismatch {
                    op: "concat_rows",
                    left: self.shape(*first),
                    right: x.shape(),
                });
            }
            data.extend_from_slice(x.data());
            rows += x.rows();
        }
        let out = Tensor2D::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Row `r` as a `1×n` matrix.
    pub fn row(&self, a: Var, r: usize) -> Result<Var, NumError> {
        let x = self.val(a);
        if r >= x.rows() {
            return Err(NumError::OutOfRange {
                op: "row",
                index: r,
                bound: x.rows(),
            });
        }
        let out = Tensor2D::from_vec(1, x.cols(), x.row(r).to_vec())?;
        drop(x);
        Ok(self.push(out, Op::Row(a, r)))
    }

    /// Output row `i` is `scales[i] * a[indices[i]]`, or zeros where the
    /// index is `None`.
    pub fn gather_rows(&self, a: Var, indices: &[Option<usize>], scales: &[T]) -> Result<Var, NumError> {
        if indices.len() != scales.len() || indices.is_empty() {
            return Err(NumError::Arity {
                op: "gather_rows",
                expected: indices.len(),
                got: scales.len(),
            });
        }
        let x = self.val(a);
        let mut out = Tensor2D::zeros(indices.len(), x.cols());
        for (i, (&idx, &s)) in indices.iter().zip(scales).enumerate() {
            if let Some(src) = idx {
                if src >= x.rows() {
                    return Err(NumError::OutOfRange {
                        op: "gather_rows",
                        index: src,
                        bound: x.rows(),
                    });
                }
                for (o, &v) in out.row_mut(i).iter_mut().zip(x.row(src)) {
                    *o = v * s;
                }
            }
        }
        drop(x);
        Ok(self.push(out, Op::GatherRows(a, indices.to_vec(), scales.to_vec())))
    }

    /// Mean of the listed rows, as `1×n`.
    pub fn mean_rows(&self, a: Var, rows: &[usize]) -> Result<Var, NumError> {
        let x = self.val(a);
        if rows.is_empty() {
            return Err(NumError::Arity {
                op: "mean_rows",
                expected: 1,
                got: 0,
            });
        }
        let mut out = Tensor2D::zeros(1, x.cols());
        for &r in rows {
            if r >= x.rows() {
                return Err(NumError::OutOfRange {
                    op: "mean_rows",
                    index: r,
                    bound: x.rows(),
                });
            }
            for (o, &v) in out.data_mut().iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        let k = T::of(rows.len() as f64);
        out.data_mut().iter_mut().for_each(|o| *o /= k);
        drop(x);
        Ok(self.push(out, Op::MeanRows(a, rows.to_vec())))
    }

    /// Sum of all entries as `1×1`.
    pub fn sum(&self, a: Var) -> Var {
        let out = Tensor2D::scalar(self.val(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// `-ln softmax(logits)[label]` for a `1×C` logit row, via log-sum-exp.
    pub fn cross_entropy(&self, logits: Var, label: usize) -> Result<Var, NumError> {
        let x = self.val(logits);
        if x.rows() != 1 || label >= x.cols() {
            return Err(NumError::OutOfRange {
                op: "cross_entropy",
                index: label,
                bound: x.cols(),
            });
        }
        let row = x.row(0);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        let out = Tensor2D::scalar(lse - row[label]);
        drop(x);
        Ok(self.push(out, Op::CrossEntropy(logits, label)))
    }

    /// Reverse pass from a `1×1` loss. Parameter gradients are added to the
    /// accumulators in `params` (so running backward twice doubles them);
    /// per-node gradients are returned.
    pub fn backward(&self, loss: Var, params: &mut ParamSet<T>) -> Result<Gradients<T>, NumError> {
        if !self.contains(loss) {
            return Err(NumError::NotOnTape);
        }
        let nodes = self.nodes.borrow();
        if nodes[loss.idx].value.shape() != (1, 1) {
            return Err(NumError::NotScalar {
                shape: nodes[loss.idx].value.shape(),
            });
        }
        let mut grads: Vec<Option<Tensor2D<T>>> = vec![None; loss.idx + 1];
        grads[loss.idx] = Some(Tensor2D::scalar(T::one()));

        for idx in (0..=loss.idx).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            let value = |v: Var| &nodes[v.idx].value;
            match &node.op {
                Op::Leaf(param) => {
                    if let Some(id) = param {
                        params.get_mut(*id).grad.add_assign(&g);
                    }
                }
                Op::MatMul(a, b) => {
                    accumulate(&mut grads, *a, g.matmul_t(value(*b))?);
                    accumulate(&mut grads, *b, value(*a).t_matmul(&g)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    accumulate(&mut grads, *a, g.zip_map(value(*b), |x, y| x * y)?);
                    accumulate(&mut grads, *b, g.zip_map(value(*a), |x, y| x * y)?);
                }
                Op::AddRow(a, row) => {
                    accumulate(&mut grads, *row, column_sums(&g));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::MulRow(a, row) => {
                    let (x, r) = (value(*a), value(*row));
                    let mut ga = g.clone();
                    let mut gr = Tensor2D::zeros(1, r.cols());
                    for i in 0..g.rows() {
                        for c in 0..g.cols() {
                            ga[(i, c)] = g[(i, c)] * r[(0, c)];
                            gr[(0, c)] += g[(i, c)] * x[(i, c)];
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *row, gr);
                }
                Op::Scale(a, factor) => accumulate(&mut grads, *a, g.map(|x| x * *factor)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g.clone()),
                Op::Sigmoid(a) => {
                    let local = node.value.map(|y| y * (T::one() - y));
                    accumulate(&mut grads, *a, g.zip_map(&local, |x, y| x * y)?);
                }
                Op::Tanh(a) => {
                    let local = node.value.map(|y| T::one() - y * y);
                    accumulate(&mut grads, *a, g.zip_map(&local, |x, y| x * y)?);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(value(*a), |x, v| if v > T::zero() { x } else { T::zero() })?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softplus(a) => {
                    let ga = g.zip_map(value(*a), |x, v| x * sigmoid(v))?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Ln(a) => {
                    let ga = g.zip_map(value(*a), |x, v| x / v)?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Tensor2D::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: T = g.row(r).iter().zip(y.row(r)).map(|(&gi, &yi)| gi * yi).sum();
                        for c in 0..y.cols() {
                            ga[(r, c)] = y[(r, c)] * (g[(r, c)] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LayerNormRows(a, eps) => {
                    let (x, y) = (value(*a), &node.value);
                    let n = T::of(x.cols() as f64);
                    let mut ga = Tensor2D::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let (_, inv_std) = row_moments(x.row(r), *eps);
                        let g_mean = g.row(r).iter().copied().sum::<T>() / n;
                        let gy_mean = g.row(r).iter().zip(y.row(r)).map(|(&gi, &yi)| gi * yi).sum::<T>() / n;
                        for c in 0..x.cols() {
                            ga[(r, c)] = inv_std * (g[(r, c)] - g_mean - y[(r, c)] * gy_mean);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::SliceCols(a, start) => {
                    let (rows, cols) = value(*a).shape();
                    let mut ga = Tensor2D::zeros(rows, cols);
                    for r in 0..rows {
                        ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = value(p).shape();
                        let gp = Tensor2D::from_fn(rows, cols, |r, c| g[(r, offset + c)]);
                        offset += cols;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = value(p).shape();
                        let gp = Tensor2D::from_fn(rows, cols, |r, c| g[(offset + r, c)]);
                        offset += rows;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::Row(a, r) => {
                    let (rows, cols) = value(*a).shape();
                    let mut ga = Tensor2D::zeros(rows, cols);
                    ga.row_mut(*r).copy_from_slice(g.row(0));
                    accumulate(&mut grads, *a, ga);
                }
                Op::GatherRows(a, indices, scales) => {
                    let (rows, cols) = value(*a).shape();
                    let mut ga = Tensor2D::zeros(rows, cols);
                    for (i, (idx, &s)) in indices.iter().zip(scales).enumerate() {
                        if let Some(src) = idx {
                            for (o, &gv) in ga.row_mut(*src).iter_mut().zip(g.row(i)) {
                                *o += gv * s;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MeanRows(a, rows) => {
                    let (nr, nc) = value(*a).shape();
                    let k = T::of(rows.len() as f64);
                    let mut ga = Tensor2D::zeros(nr, nc);
                    for &r in rows {
                        for (o, &gv) in ga.row_mut(r).iter_mut().zip(g.row(0)) {
                            *o += gv / k;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let (rows, cols) = value(*a).shape();
                    accumulate(&mut grads, *a, Tensor2D::full(rows, cols, g.item()));
                }
                Op::CrossEntropy(logits, label) => {
                    let mut ga = softmax_rows(value(*logits));
                    ga[(0, *label)] -= T::one();
                    ga.scale_in_place(g.item());
                    accumulate(&mut grads, *logits, ga);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor2D<T>>], v: Var, g: Tensor2D<T>) {
    match &mut grads[v.idx] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn column_sums<T: Scalar>(g: &Tensor2D<T>) -> Tensor2D<T> {
    let mut out = Tensor2D::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, &v) in out.data_mut().iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    out
}

fn row_moments<T: Scalar>(row: &[T], eps: T) -> (T, T) {
    let n = T::of(row.len() as f64);
    let mean = row.iter().copied().sum::<T>() / n;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    (mean, T::one() / (var + eps).sqrt())
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softmax_rows<T: Scalar>(x: &Tensor2D<T>) -> Tensor2D<T> {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}
