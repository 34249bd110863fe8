//! Event-level limit order book modelling.
//!
//! The crate covers the full pipeline from raw LOBSTER message/book files to
//! a market-making backtest:
//!
//! * [`events`] classifies book messages into twelve midprice-aware event types.
//! * [`hawkes`] is an exponential-kernel (non)linear multivariate Hawkes process
//!   with exact likelihood and thinning simulation.
//! * [`nn`] is a small tape-based reverse-mode differentiation engine with RMSprop.
//! * [`neural`] is the stacked continuous-time LSTM Hawkes model and its trainer.
//! * [`sim`] draws event streams from a fitted neural model by thinning.
//! * [`midprice`] turns event streams into midprice paths and computes stylized stats.
//! * [`mm`] is the event-driven market-making environment and a discrete SAC agent.
//! * [`report`] renders CSV tables and SVG plots.

pub mod events;
pub mod exec;
pub mod hawkes;
pub mod midprice;
pub mod mm;
pub mod neural;
pub mod nn;
pub mod report;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod synth;
pub mod thinning;

pub use events::{EventType, LobEvent};
pub use exec::Exec;
