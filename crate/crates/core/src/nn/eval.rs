use super::graph::{self, broadcast_ok, Graph};
use super::{NnError, Result, Tensor};
use std::rc::Rc;

/// Forward-only backend: values are computed eagerly and nothing is recorded.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eval;

fn elementwise(a: &Tensor, b: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Rc<Tensor>> {
    let bcast = broadcast_ok(a, b).ok_or(NnError::Shape { op, left: a.shape(), right: b.shape() })?;
    Ok(Rc::new(graph::binary(a, b, bcast, f)))
}

impl Graph for Eval {
    type V = Rc<Tensor>;

    fn param(&mut self, t: &Tensor) -> Self::V {
        Rc::new(t.clone())
    }

    fn constant(&mut self, t: Tensor) -> Self::V {
        Rc::new(t)
    }

    fn value<'a>(&'a self, v: &'a Self::V) -> &'a Tensor {
        v
    }

    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        Ok(Rc::new(a.matmul(b)?))
    }

    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        elementwise(a, b, "add", |x, y| x + y)
    }

    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        elementwise(a, b, "sub", |x, y| x - y)
    }

    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        elementwise(a, b, "mul", |x, y| x * y)
    }

    fn sigmoid(&mut self, a: &Self::V) -> Self::V {
        Rc::new(a.map(super::sigmoid))
    }

    fn tanh(&mut self, a: &Self::V) -> Self::V {
        Rc::new(a.map(f64::tanh))
    }

    fn softplus(&mut self, a: &Self::V) -> Self::V {
        Rc::new(a.map(super::softplus))
    }

    fn exp(&mut self, a: &Self::V) -> Self::V {
        Rc::new(a.map(f64::exp))
    }

    fn log(&mut self, a: &Self::V) -> Self::V {
        Rc::new(a.map(f64::ln))
    }

    fn relu(&mut self, a: &Self::V) -> Self::V {
        Rc::new(a.map(|x| x.max(0.0)))
    }

    fn scale(&mut self, a: &Self::V, c: f64) -> Self::V {
        Rc::new(a.map(|x| x * c))
    }

    fn add_scalar(&mut self, a: &Self::V, c: f64) -> Self::V {
        Rc::new(a.map(|x| x + c))
    }

    fn sum(&mut self, a: &Self::V) -> Self::V {
        Rc::new(Tensor::scalar(a.data().iter().sum()))
    }

    fn sum_cols(&mut self, a: &Self::V) -> Self::V {
        Rc::new(graph::sum_cols(a))
    }

    fn concat_rows(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        Ok(Rc::new(graph::concat_rows(a, b)?))
    }

    fn slice_rows(&mut self, a: &Self::V, start: usize, len: usize) -> Result<Self::V> {
        Ok(Rc::new(graph::slice_rows(a, start, len)?))
    }

    fn slice_cols(&mut self, a: &Self::V, start: usize, len: usize) -> Result<Self::V> {
        Ok(Rc::new(graph::slice_cols(a, start, len)?))
    }

    fn row_matmul(&mut self, a: &Self::V, w: &Self::V) -> Result<Self::V> {
        Ok(Rc::new(graph::row_matmul(a, w)?))
    }

    fn masked_log_softmax(&mut self, a: &Self::V, mask: &Tensor) -> Result<Self::V> {
        Ok(Rc::new(graph::masked_log_softmax(a, mask)?))
    }
}
