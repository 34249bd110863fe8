//! Minimal reverse-mode differentiation over small dense blocks.
//!
//! Model code is written once against the [`Graph`] trait and runs either on
//! a recording [`Tape`] (training, gradients) or on the plain [`Eval`]
//! backend (simulation, evaluation), which skips all bookkeeping.

mod checkpoint;
mod eval;
pub mod gradcheck;
mod graph;
mod params;
mod rmsprop;
mod tape;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use eval::Eval;
pub use graph::Graph;
pub use params::{ParamId, ParamSet};
pub use rmsprop::{RmsProp, RmsPropConfig};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_activations() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((softplus(-10.0) - 4.539_889e-5).abs() < 1e-9);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        for y in [1e-4, 0.5, 1.0, 7.0, 40.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
    }
}
