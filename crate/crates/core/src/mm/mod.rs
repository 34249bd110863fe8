//! Event-driven market making: environment, replay buffer, discrete
//! soft actor-critic agent and the train / evaluate experiment.

mod env;
mod experiment;
mod replay;
mod sac;

pub use env::{
    fill_ratio, observed_stream, run_episode, segment, Action, FillKind, FillRecord, FillSide, MarketStream, MmConfig, MmEnv,
    MmEpisode, MmState, StepLog, StepOutcome,
};
pub use experiment::{evaluate, train_agent, train_and_evaluate, EvalSummary, ExperimentConfig, ExperimentReport, FillCounts, TrainEpisode};
pub use replay::{ReplayBuffer, Transition};
pub use sac::{critic_loss, policy_loss, Batch, Diagnostics, Normalizer, SacAgent, SacConfig, OBS_DIM};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("illegal action {action:?} at inventory {q}")]
    IllegalAction { action: Action, q: i32 },
    #[error("stream exhausted after {available} events, episode needs {needed}")]
    StreamExhausted { available: usize, needed: usize },
    #[error("episode already finished")]
    Finished,
    #[error("no legal action")]
    NoLegalAction,
    #[error("replay buffer holds {have} transitions, batch needs {need}")]
    ReplayTooSmall { have: usize, need: usize },
    #[error("non-finite {what} at update {update}: {detail}")]
    NonFinite { what: &'static str, update: usize, detail: String },
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MmError>;
