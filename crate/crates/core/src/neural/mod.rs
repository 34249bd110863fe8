//! Continuous-time LSTM Hawkes model with one stacked unit per event type.

mod model;
mod train;

pub use model::{argmax, Architecture, CtLstm, NeuralState, StreamEval};
pub use train::{read_model_dir, train, write_model_dir, EpochMetrics, TrainReport, TrainedModel};

use crate::events::LobEvent;
use crate::nn::NnError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("event {index}: {reason}")]
    BadEvent { index: usize, reason: String },
    #[error("non-finite state in unit {unit}")]
    NonFiniteState { unit: usize },
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("{split} split has {events} events; need at least {needed}")]
    TooShort { split: &'static str, events: usize, needed: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

/// One observation fed to the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub time: f64,
    pub kind: usize,
    pub state: usize,
}

impl Mark {
    pub fn new(time: f64, kind: usize, state: usize) -> Self {
        Self { time, kind, state }
    }
}

impl From<&LobEvent> for Mark {
    fn from(e: &LobEvent) -> Self {
        Mark { time: e.time, kind: e.etype.index(), state: e.market_state.index() }
    }
}

/// Marks with a fixed market state, e.g. output of a classical Hawkes simulation.
pub fn marks_from_pairs(events: &[(f64, usize)], state: usize) -> Vec<Mark> {
    events.iter().map(|&(t, k)| Mark::new(t, k, state)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtLstmConfig {
    pub num_types: usize,
    pub hidden: usize,
    pub num_states: usize,
    /// Monte-Carlo samples per interval for the compensator during training.
    pub mc_samples: usize,
    /// Samples per interval when scoring validation and test splits.
    pub eval_mc_samples: usize,
    pub epochs: usize,
    pub batch: usize,
    pub window: usize,
    /// Offset between consecutive window starts; `None` means `window`.
    pub stride: Option<usize>,
    pub lr: f64,
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for CtLstmConfig {
    fn default() -> Self {
        Self {
            num_types: 12,
            hidden: 32,
            num_states: 3,
            mc_samples: 1,
            eval_mc_samples: 8,
            epochs: 20,
            batch: 256,
            window: 100,
            stride: None,
            lr: 0.002,
            split: [0.6, 0.2, 0.2],
            seed: 0,
        }
    }
}

impl CtLstmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NeuralError::Config(m.to_string()));
        if self.num_types == 0 || self.num_states == 0 {
            return bad("need at least one event type and one market state");
        }
        if self.hidden == 0 {
            return bad("hidden dimension must be at least 1");
        }
        if self.window < 2 {
            return bad("window must hold at least 2 events");
        }
        if self.stride == Some(0) {
            return bad("stride must be positive");
        }
        if self.mc_samples == 0 || self.eval_mc_samples == 0 {
            return bad("need at least one Monte-Carlo sample");
        }
        if self.batch == 0 || self.epochs == 0 {
            return bad("batch and epochs must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.split.iter().any(|&s| !(s > 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split fractions must be positive and sum to 1");
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture { num_types: self.num_types, hidden: self.hidden, num_states: self.num_states }
    }
}
