use super::{NnError, ParamSet, Result, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self { lr: 0.002, rho: 0.99, eps: 1e-8 }
    }
}

/// RMSprop: `s <- rho s + (1 - rho) g^2`, `p <- p - lr g / (sqrt(s) + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub config: RmsPropConfig,
    sq: Vec<Tensor>,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, params: &ParamSet) -> Self {
        Self { config, sq: params.zeros_like() }
    }

    pub fn accumulators(&self) -> &[Tensor] {
        &self.sq
    }

    /// Apply one update. A non-finite gradient rejects the whole step and
    /// leaves both parameters and accumulators untouched.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(NnError::Shape { op: "rmsprop", left: (params.len(), 0), right: (grads.len(), 0) });
        }
        for (i, (p, g)) in params.tensors().iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(NnError::Shape { op: "rmsprop", left: p.shape(), right: g.shape() });
            }
            if !g.is_finite() {
                return Err(NnError::NonFinite(format!("gradient of {}", params.name(super::ParamId(i)))));
            }
        }
        let RmsPropConfig { lr, rho, eps } = self.config;
        for ((p, g), s) in params.tensors_mut().iter_mut().zip(grads).zip(&mut self.sq) {
            for ((pv, &gv), sv) in p.data_mut().iter_mut().zip(g.data()).zip(s.data_mut()) {
                *sv = rho * *sv + (1.0 - rho) * gv * gv;
                *pv -= lr * gv / (sv.sqrt() + eps);
            }
        }
        Ok(())
    }
}
