//! Ogata thinning for marked point processes with an arbitrary history-driven
//! intensity.
//!
//! Candidates are drawn from a homogeneous clock at a dominating rate and
//! accepted with probability `Lambda(t) / bound`; the mark is drawn with
//! probability `lambda_i(t) / Lambda(t)`. Two bounding rules are supported:
//! the exact rule for intensities that only decay between events, and a
//! grid rule (max over a lookahead grid times a safety factor) for
//! intensities that may rise between events. Under the grid rule a candidate
//! whose intensity exceeds the bound is discarded and the bound doubled.

use crate::rng::{categorical, open_unit};
use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ThinningError {
    #[error("dominating rate is not finite at t = {0}")]
    BoundOverflow(f64),
    #[error("non-finite intensity at t = {0}")]
    NonFinite(f64),
    #[error("{0} consecutive bound violations; intensity is pathological")]
    TooManyViolations(usize),
    #[error("horizon needs a time limit or an event count")]
    NoHorizon,
}

/// A point process whose intensity depends on its own history.
pub trait IntensityProcess {
    fn dim(&self) -> usize;

    /// Intensities at `t`, at or after the last recorded event, including
    /// every recorded event (right limit at event times).
    fn intensities(&self, t: f64, out: &mut [f64]);

    fn record(&mut self, t: f64, mark: usize);

    /// True if every intensity is non-increasing between events.
    fn decays_between_events(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BoundRule {
    /// Total intensity at the current time; exact for decaying intensities.
    Current,
    /// `safety * max` of the total intensity over `points` grid nodes spanning
    /// a lookahead window of `lookahead` expected events.
    Grid { points: usize, safety: f64, lookahead: f64 },
}

impl BoundRule {
    pub fn grid(points: usize, safety: f64) -> Self {
        BoundRule::Grid { points, safety, lookahead: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub until: Option<f64>,
    pub max_events: Option<usize>,
}

impl Horizon {
    pub fn time(t: f64) -> Self {
        Self { until: Some(t), max_events: None }
    }

    pub fn events(n: usize) -> Self {
        Self { until: None, max_events: Some(n) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThinningConfig {
    pub bound: BoundRule,
    pub horizon: Horizon,
    pub start: f64,
    pub max_consecutive_violations: usize,
}

impl ThinningConfig {
    pub fn new(bound: BoundRule, horizon: Horizon) -> Self {
        Self { bound, horizon, start: 0.0, max_consecutive_violations: 1000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThinningStats {
    pub proposals: u64,
    pub accepted: u64,
    pub violations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinningOutput {
    pub events: Vec<(f64, usize)>,
    pub stats: ThinningStats,
}

fn total(p: &impl IntensityProcess, t: f64, buf: &mut [f64]) -> Result<f64, ThinningError> {
    p.intensities(t, buf);
    let s: f64 = buf.iter().sum();
    if !s.is_finite() || buf.iter().any(|&x| x < 0.0) {
        return Err(ThinningError::NonFinite(t));
    }
    Ok(s)
}

/// Run thinning from `cfg.start` until the horizon is reached.
pub fn thin<P: IntensityProcess, R: Rng + ?Sized>(
    process: &mut P,
    cfg: &ThinningConfig,
    rng: &mut R,
) -> Result<ThinningOutput, ThinningError> {
    let Horizon { until, max_events } = cfg.horizon;
    if until.is_none() && max_events.is_none() {
        return Err(ThinningError::NoHorizon);
    }
    let t_end = until.unwrap_or(f64::INFINITY);
    let n_max = max_events.unwrap_or(usize::MAX);
    let mut lam = vec![0.0; process.dim()];
    let mut t = cfg.start;
    let mut events = Vec::new();
    let mut stats = ThinningStats::default();
    let mut consecutive = 0usize;

    'outer: while events.len() < n_max && t < t_end {
        let now = total(process, t, &mut lam)?;
        let (mut bound, window_end) = match cfg.bound {
            BoundRule::Current => (now, t_end),
            BoundRule::Grid { points, safety, lookahead } => {
                let span = lookahead / now.max(1e-12);
                let end = (t + span).min(t_end);
                let n = points.max(2);
                let mut m = now;
                for g in 1..n {
                    let s = t + (end - t) * g as f64 / (n - 1) as f64;
                    m = m.max(total(process, s, &mut lam)?);
                }
                (safety * m, end)
            }
        };
        if bound <= 0.0 {
            // Nothing can ever happen again.
            break;
        }
        loop {
            if !bound.is_finite() {
                return Err(ThinningError::BoundOverflow(t));
            }
            let dt = -open_unit(rng).ln() / bound;
            let cand = t + dt;
            stats.proposals += 1;
            if cand >= window_end {
                t = window_end;
                continue 'outer;
            }
            let lt = total(process, cand, &mut lam)?;
            if lt > bound * (1.0 + 1e-12) {
                stats.violations += 1;
                consecutive += 1;
                warn!("thinning bound violated at t = {cand}: {lt} > {bound}; doubling");
                if consecutive >= cfg.max_consecutive_violations {
                    return Err(ThinningError::TooManyViolations(consecutive));
                }
                bound *= 2.0;
                continue;
            }
            consecutive = 0;
            if rng.random::<f64>() * bound <= lt {
                let mark = categorical(rng, &lam);
                process.record(cand, mark);
                events.push((cand, mark));
                stats.accepted += 1;
                t = cand;
                continue 'outer;
            }
            t = cand;
            if matches!(cfg.bound, BoundRule::Current) {
                bound = lt;
                if bound <= 0.0 {
                    break 'outer;
                }
            }
        }
    }
    Ok(ThinningOutput { events, stats })
}

/// Homogeneous Poisson process with fixed per-mark rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantIntensity(pub Vec<f64>);

impl IntensityProcess for ConstantIntensity {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn intensities(&self, _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }

    fn record(&mut self, _t: f64, _mark: usize) {}

    fn decays_between_events(&self) -> bool {
        true
    }
}
