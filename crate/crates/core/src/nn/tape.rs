use super::graph::{self, broadcast_ok, Graph};
use super::{NnError, Result, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var, bool),
    Sub(Var, Var, bool),
    Mul(Var, Var, bool),
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    SumCols(Var),
    ConcatRows(Var, Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    RowMatMul(Var, Var),
    MaskedLogSoftmax(Var, Tensor),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records operations for one forward pass; consumed by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every recorded value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros if the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn elementwise(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, bool)> {
        let (ta, tb) = (self.val(a), self.val(b));
        let bcast = broadcast_ok(ta, tb).ok_or(NnError::Shape { op: name, left: ta.shape(), right: tb.shape() })?;
        Ok((graph::binary(ta, tb, bcast, f), bcast))
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let shape = self.val(loss).shape();
        if shape != (1, 1) {
            return Err(NnError::NonScalarLoss(shape));
        }
        if !self.val(loss).item().is_finite() {
            return Err(NnError::NonFinite("loss".into()));
        }
        let n = self.nodes.len();
        let shapes: Vec<_> = self.nodes.iter().map(|nd| nd.value.shape()).collect();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        // Collapse a broadcast gradient back to the `1 x k` operand.
        fn reduce_rows(g: &Tensor) -> Tensor {
            let c = g.cols();
            let mut out = vec![0.0; c];
            for (i, x) in g.data().iter().enumerate() {
                out[i % c] += x;
            }
            Tensor::row(out)
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.val(*b));
                    let gb = self.val(*a).t_matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b, bc) => {
                    let gb = if *bc { reduce_rows(&g) } else { g.clone() };
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *b, gb);
                }
                Op::Sub(a, b, bc) => {
                    let gb = if *bc { reduce_rows(&g) } else { g.clone() }.map(|x| -x);
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *b, gb);
                }
                Op::Mul(a, b, bc) => {
                    let (ta, tb) = (self.val(*a), self.val(*b));
                    let ga = graph::binary(&g, tb, *bc, |x, y| x * y);
                    let gb_full = g.zip_map(ta, |x, y| x * y);
                    let gb = if *bc { reduce_rows(&gb_full) } else { gb_full };
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |x, s| x * s * (1.0 - s));
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |x, t| x * (1.0 - t * t));
                    acc(&mut grads, *a, ga);
                }
                Op::Softplus(a) => {
                    let ga = g.zip_map(self.val(*a), |x, z| x * super::sigmoid(z));
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip_map(&node.value, |x, e| x * e);
                    acc(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ga = g.zip_map(self.val(*a), |x, z| x / z);
                    acc(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.val(*a), |x, z| if z > 0.0 { x } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    acc(&mut grads, *a, g.map(|x| x * c));
                }
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::Sum(a) => {
                    let (r, c) = shapes[a.0];
                    acc(&mut grads, *a, Tensor::filled(r, c, g.item()));
                }
                Op::SumCols(a) => {
                    let (r, c) = shapes[a.0];
                    let mut ga = Tensor::zeros(r, c);
                    for (k, x) in ga.data_mut().iter_mut().enumerate() {
                        *x = g.data()[k / c];
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatRows(a, b) => {
                    let ra = shapes[a.0].0;
                    let rb = shapes[b.0].0;
                    acc(&mut grads, *a, graph::slice_rows(&g, 0, ra)?);
                    acc(&mut grads, *b, graph::slice_rows(&g, ra, rb)?);
                }
                Op::SliceRows(a, start) => {
                    let (r, c) = shapes[a.0];
                    let mut ga = Tensor::zeros(r, c);
                    ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    acc(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    acc(&mut grads, *a, graph::unslice_cols(&g, shapes[a.0], *start));
                }
                Op::RowMatMul(a, w) => {
                    let (ga, gw) = graph::row_matmul_grads(self.val(*a), self.val(*w), &g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *w, gw);
                }
                Op::MaskedLogSoftmax(a, mask) => {
                    // d/dx_j = g_j - p_j * sum_k g_k over unmasked entries.
                    let c = g.cols();
                    let mut ga = Tensor::zeros(g.rows(), c);
                    for r in 0..g.rows() {
                        let mut gsum = 0.0;
                        for j in 0..c {
                            if mask.get(r, j) > 0.0 {
                                gsum += g.get(r, j);
                            }
                        }
                        for j in 0..c {
                            if mask.get(r, j) > 0.0 {
                                let p = node.value.get(r, j).exp();
                                ga.set(r, j, g.get(r, j) - p * gsum);
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
            }
        }
        Ok(Gradients { grads, shapes })
    }
}

impl Graph for Tape {
    type V = Var;

    fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.clone(), Op::Leaf)
    }

    fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        self.val(*v)
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = self.val(*a).matmul(self.val(*b))?;
        Ok(self.push(out, Op::MatMul(*a, *b)))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let (out, bc) = self.elementwise(*a, *b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(*a, *b, bc)))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let (out, bc) = self.elementwise(*a, *b, "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(*a, *b, bc)))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let (out, bc) = self.elementwise(*a, *b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(*a, *b, bc)))
    }

    fn sigmoid(&mut self, a: &Var) -> Var {
        let out = self.val(*a).map(super::sigmoid);
        self.push(out, Op::Sigmoid(*a))
    }

    fn tanh(&mut self, a: &Var) -> Var {
        let out = self.val(*a).map(f64::tanh);
        self.push(out, Op::Tanh(*a))
    }

    fn softplus(&mut self, a: &Var) -> Var {
        let out = self.val(*a).map(super::softplus);
        self.push(out, Op::Softplus(*a))
    }

    fn exp(&mut self, a: &Var) -> Var {
        let out = self.val(*a).map(f64::exp);
        self.push(out, Op::Exp(*a))
    }

    fn log(&mut self, a: &Var) -> Var {
        let out = self.val(*a).map(f64::ln);
        self.push(out, Op::Log(*a))
    }

    fn relu(&mut self, a: &Var) -> Var {
        let out = self.val(*a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(*a))
    }

    fn scale(&mut self, a: &Var, c: f64) -> Var {
        let out = self.val(*a).map(|x| x * c);
        self.push(out, Op::Scale(*a, c))
    }

    fn add_scalar(&mut self, a: &Var, c: f64) -> Var {
        let out = self.val(*a).map(|x| x + c);
        self.push(out, Op::AddScalar(*a))
    }

    fn sum(&mut self, a: &Var) -> Var {
        let out = Tensor::scalar(self.val(*a).data().iter().sum());
        self.push(out, Op::Sum(*a))
    }

    fn sum_cols(&mut self, a: &Var) -> Var {
        let out = graph::sum_cols(self.val(*a));
        self.push(out, Op::SumCols(*a))
    }

    fn concat_rows(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = graph::concat_rows(self.val(*a), self.val(*b))?;
        Ok(self.push(out, Op::ConcatRows(*a, *b)))
    }

    fn slice_rows(&mut self, a: &Var, start: usize, len: usize) -> Result<Var> {
        let out = graph::slice_rows(self.val(*a), start, len)?;
        Ok(self.push(out, Op::SliceRows(*a, start)))
    }

    fn slice_cols(&mut self, a: &Var, start: usize, len: usize) -> Result<Var> {
        let out = graph::slice_cols(self.val(*a), start, len)?;
        Ok(self.push(out, Op::SliceCols(*a, start)))
    }

    fn row_matmul(&mut self, a: &Var, w: &Var) -> Result<Var> {
        let out = graph::row_matmul(self.val(*a), self.val(*w))?;
        Ok(self.push(out, Op::RowMatMul(*a, *w)))
    }

    fn masked_log_softmax(&mut self, a: &Var, mask: &Tensor) -> Result<Var> {
        let out = graph::masked_log_softmax(self.val(*a), mask)?;
        Ok(self.push(out, Op::MaskedLogSoftmax(*a, mask.clone())))
    }
}
