use super::{Result, Tensor};

/// Operation set shared by the recording tape and the plain evaluator.
///
/// Binary elementwise ops accept either equal shapes or a `1 x k` right-hand
/// side broadcast across the rows of an `n x k` left-hand side.
pub trait Graph {
    type V: Clone;

    /// Trainable input; the tape tracks its gradient.
    fn param(&mut self, t: &Tensor) -> Self::V;
    /// Non-trainable input.
    fn constant(&mut self, t: Tensor) -> Self::V;
    fn value<'a>(&'a self, v: &'a Self::V) -> &'a Tensor;

    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    /// Hadamard product.
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;

    fn sigmoid(&mut self, a: &Self::V) -> Self::V;
    fn tanh(&mut self, a: &Self::V) -> Self::V;
    fn softplus(&mut self, a: &Self::V) -> Self::V;
    fn exp(&mut self, a: &Self::V) -> Self::V;
    fn log(&mut self, a: &Self::V) -> Self::V;
    fn relu(&mut self, a: &Self::V) -> Self::V;
    fn scale(&mut self, a: &Self::V, c: f64) -> Self::V;
    fn add_scalar(&mut self, a: &Self::V, c: f64) -> Self::V;

    /// Sum of all elements, `1 x 1`.
    fn sum(&mut self, a: &Self::V) -> Self::V;
    /// Per-row sums, `n x k -> n x 1`.
    fn sum_cols(&mut self, a: &Self::V) -> Self::V;
    /// Vertical stack of two blocks with equal column counts.
    fn concat_rows(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    /// Rows `start..start+len`.
    fn slice_rows(&mut self, a: &Self::V, start: usize, len: usize) -> Result<Self::V>;
    /// Columns `start..start+len`.
    fn slice_cols(&mut self, a: &Self::V, start: usize, len: usize) -> Result<Self::V>;
    /// Per-row products with separate matrices: for `a` of shape `n x p` and
    /// `w` stacking `n` blocks of `p x q`, row `k` of the result is `a[k] * w_k`.
    fn row_matmul(&mut self, a: &Self::V, w: &Self::V) -> Result<Self::V>;
    /// Row-wise log-softmax restricted to entries where `mask` is 1.
    /// Masked-out entries are reported as 0 and receive no gradient.
    fn masked_log_softmax(&mut self, a: &Self::V, mask: &Tensor) -> Result<Self::V>;

    fn neg(&mut self, a: &Self::V) -> Self::V {
        self.scale(a, -1.0)
    }

    fn mean(&mut self, a: &Self::V) -> Self::V {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(&s, 1.0 / n)
    }

    /// `w * x + b`.
    fn affine(&mut self, w: &Self::V, x: &Self::V, b: &Self::V) -> Result<Self::V> {
        let wx = self.matmul(w, x)?;
        self.add(&wx, b)
    }
}

pub(crate) fn broadcast_ok(a: &Tensor, b: &Tensor) -> Option<bool> {
    if a.shape() == b.shape() {
        Some(false)
    } else if b.rows() == 1 && b.cols() == a.cols() {
        Some(true)
    } else {
        None
    }
}

pub(crate) fn binary(a: &Tensor, b: &Tensor, bcast: bool, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if !bcast {
        return a.zip_map(b, f);
    }
    let cols = a.cols();
    let mut out = a.clone();
    for (i, x) in out.data_mut().iter_mut().enumerate() {
        *x = f(*x, b.data()[i % cols]);
    }
    out
}

pub(crate) fn sum_cols(a: &Tensor) -> Tensor {
    let cols = a.cols();
    Tensor::column(a.data().chunks(cols).map(|r| r.iter().sum()).collect())
}

pub(crate) fn concat_rows(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.cols() {
        return Err(super::NnError::Shape { op: "concat_rows", left: a.shape(), right: b.shape() });
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(a.rows() + b.rows(), a.cols(), data)
}

pub(crate) fn slice_rows(a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    if start + len > a.rows() {
        return Err(super::NnError::Shape { op: "slice_rows", left: a.shape(), right: (start, len) });
    }
    let c = a.cols();
    Tensor::from_vec(len, c, a.data()[start * c..(start + len) * c].to_vec())
}

pub(crate) fn slice_cols(a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    if start + len > a.cols() {
        return Err(super::NnError::Shape { op: "slice_cols", left: a.shape(), right: (start, len) });
    }
    let c = a.cols();
    let data = a.data().chunks(c).flat_map(|r| r[start..start + len].iter().copied()).collect();
    Tensor::from_vec(a.rows(), len, data)
}

/// Scatter a column-slice gradient back into a zero block of shape `shape`.
pub(crate) fn unslice_cols(g: &Tensor, shape: (usize, usize), start: usize) -> Tensor {
    let (r, c) = shape;
    let mut out = Tensor::zeros(r, c);
    let len = g.cols();
    for i in 0..r {
        out.data_mut()[i * c + start..i * c + start + len].copy_from_slice(&g.data()[i * len..(i + 1) * len]);
    }
    out
}

pub(crate) fn row_matmul(a: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (n, p) = a.shape();
    if w.rows() != n * p {
        return Err(super::NnError::Shape { op: "row_matmul", left: a.shape(), right: w.shape() });
    }
    let q = w.cols();
    let mut out = vec![0.0; n * q];
    for k in 0..n {
        let o = &mut out[k * q..(k + 1) * q];
        for (l, &x) in a.data()[k * p..(k + 1) * p].iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let wr = &w.data()[(k * p + l) * q..(k * p + l + 1) * q];
            for (ov, wv) in o.iter_mut().zip(wr) {
                *ov += x * wv;
            }
        }
    }
    Tensor::from_vec(n, q, out)
}

/// Gradients of [`row_matmul`] with respect to both operands.
pub(crate) fn row_matmul_grads(a: &Tensor, w: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let (n, p) = a.shape();
    let q = w.cols();
    let mut ga = Tensor::zeros(n, p);
    let mut gw = Tensor::zeros(w.rows(), q);
    for k in 0..n {
        let gk = &g.data()[k * q..(k + 1) * q];
        for l in 0..p {
            let row = (k * p + l) * q;
            let wr = &w.data()[row..row + q];
            ga.data_mut()[k * p + l] = gk.iter().zip(wr).map(|(x, y)| x * y).sum();
            let x = a.data()[k * p + l];
            if x != 0.0 {
                for (gv, &gg) in gw.data_mut()[row..row + q].iter_mut().zip(gk) {
                    *gv = x * gg;
                }
            }
        }
    }
    (ga, gw)
}

pub(crate) fn masked_log_softmax(a: &Tensor, mask: &Tensor) -> Result<Tensor> {
    if a.shape() != mask.shape() {
        return Err(super::NnError::Shape { op: "masked_log_softmax", left: a.shape(), right: mask.shape() });
    }
    let c = a.cols();
    let mut out = Tensor::zeros(a.rows(), c);
    for r in 0..a.rows() {
        let row = &a.data()[r * c..(r + 1) * c];
        let m = &mask.data()[r * c..(r + 1) * c];
        let max = row
            .iter()
            .zip(m)
            .filter(|(_, &k)| k > 0.0)
            .map(|(&x, _)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(super::NnError::NonFinite("masked_log_softmax: fully masked row".into()));
        }
        let lse = max
            + row.iter().zip(m).filter(|(_, &k)| k > 0.0).map(|(&x, _)| (x - max).exp()).sum::<f64>().ln();
        for j in 0..c {
            if m[j] > 0.0 {
                out.set(r, j, row[j] - lse);
            }
        }
    }
    Ok(out)
}
