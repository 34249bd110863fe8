//! Event streams drawn from a fitted neural Hawkes model by thinning.

use crate::events::{EventType, LobEvent, MarketState};
use crate::exec::Exec;
use crate::neural::{CtLstm, Mark, NeuralError, NeuralState};
use crate::rng::{categorical, split, SimRng};
use crate::thinning::{thin, BoundRule, Horizon, IntensityProcess, ThinningConfig, ThinningError, ThinningStats};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Thinning(#[from] ThinningError),
    #[error(transparent)]
    Model(#[from] NeuralError),
    #[error("no completed runs")]
    NoRuns,
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonMode {
    Events(usize),
    Seconds(f64),
}

/// Market-state input fed with each simulated event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum StateMode {
    /// Always balanced.
    Balanced,
    /// Three-state Markov chain; rows are `P(next | current)`.
    Markov { transition: [[f64; 3]; 3], initial: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub runs: usize,
    pub horizon: HorizonMode,
    pub seed: u64,
    pub safety: f64,
    pub grid_points: usize,
    /// Expected events spanned by one bounding window.
    pub lookahead: f64,
    pub state_mode: StateMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            runs: 200,
            horizon: HorizonMode::Events(1000),
            seed: 0,
            safety: 2.0,
            grid_points: 16,
            lookahead: 4.0,
            state_mode: StateMode::Balanced,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(SimError::Config("runs must be at least 1".into()));
        }
        if !(self.safety > 1.0) {
            return Err(SimError::Config("safety factor must exceed 1".into()));
        }
        if self.grid_points < 2 {
            return Err(SimError::Config("need at least 2 grid points".into()));
        }
        match self.horizon {
            HorizonMode::Events(0) => return Err(SimError::Config("events per run must be positive".into())),
            HorizonMode::Seconds(s) if !(s > 0.0) => return Err(SimError::Config("horizon must be positive".into())),
            _ => {}
        }
        if let StateMode::Markov { transition, initial } = &self.state_mode {
            let ok = *initial < 3
                && transition.iter().all(|r| r.iter().all(|&p| p >= 0.0) && (r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            if !ok {
                return Err(SimError::Config("Markov rows must be distributions".into()));
            }
        }
        Ok(())
    }
}

/// Maximum-likelihood transition matrix from an observed state sequence.
/// Rows with no observations fall back to staying put.
pub fn fit_markov(states: &[usize]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for w in states.windows(2) {
        c[w[0].min(2)][w[1].min(2)] += 1.0;
    }
    let mut p = [[0.0; 3]; 3];
    for i in 0..3 {
        let s: f64 = c[i].iter().sum();
        if s == 0.0 {
            p[i][i] = 1.0;
        } else {
            for j in 0..3 {
                p[i][j] = c[i][j] / s;
            }
        }
    }
    p
}

struct Driven<'a> {
    model: &'a CtLstm,
    state: NeuralState,
    market: usize,
    mode: &'a StateMode,
    rng: SimRng,
    markets: Vec<usize>,
    error: Option<NeuralError>,
}

impl IntensityProcess for Driven<'_> {
    fn dim(&self) -> usize {
        self.model.architecture().num_types
    }

    fn intensities(&self, t: f64, out: &mut [f64]) {
        self.model.intensities_into(&self.state, t - self.state.last, out);
    }

    fn record(&mut self, t: f64, mark: usize) {
        self.markets.push(self.market);
        match self.model.step(&self.state, &Mark::new(t, mark, self.market)) {
            Ok(s) => self.state = s,
            Err(e) => {
                self.error.get_or_insert(e);
            }
        }
        if let StateMode::Markov { transition, .. } = self.mode {
            self.market = categorical(&mut self.rng, &transition[self.market]);
        }
    }

    fn decays_between_events(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub events: Vec<(f64, usize)>,
    /// Market-state input used with each event.
    pub states: Vec<usize>,
    pub stats: ThinningStats,
}

impl SimRun {
    /// Canonical events without price or size.
    pub fn to_lob_events(&self) -> Vec<LobEvent> {
        self.events
            .iter()
            .zip(&self.states)
            .enumerate()
            .map(|(k, (&(time, kind), &s))| LobEvent {
                seq: k as u64,
                time,
                etype: EventType::from_index(kind).expect("twelve-type model"),
                price: 0,
                size: 0,
                market_state: MarketState::new(s as u8).unwrap_or(MarketState::BALANCED),
            })
            .collect()
    }
}

/// One thinning run, starting from an empty history at time 0.
pub fn simulate_stream(model: &CtLstm, cfg: &SimConfig, run: usize) -> Result<SimRun> {
    cfg.validate()?;
    let initial = match &cfg.state_mode {
        StateMode::Balanced => MarketState::BALANCED.index(),
        StateMode::Markov { initial, .. } => *initial,
    };
    if initial >= model.architecture().num_states {
        return Err(SimError::Config(format!("market state {initial} not known to the model")));
    }
    let mut p = Driven {
        model,
        state: model.initial_state(0.0),
        market: initial,
        mode: &cfg.state_mode,
        rng: split(cfg.seed, 2 * run as u64 + 1),
        markets: Vec::new(),
        error: None,
    };
    let horizon = match cfg.horizon {
        HorizonMode::Events(n) => Horizon::events(n),
        HorizonMode::Seconds(s) => Horizon::time(s),
    };
    let tc = ThinningConfig::new(
        BoundRule::Grid { points: cfg.grid_points, safety: cfg.safety, lookahead: cfg.lookahead },
        horizon,
    );
    let out = thin(&mut p, &tc, &mut split(cfg.seed, 2 * run as u64))?;
    if let Some(e) = p.error {
        return Err(e.into());
    }
    Ok(SimRun { events: out.events, states: p.markets, stats: out.stats })
}

/// `cfg.runs` independent runs, one RNG stream pair per run.
pub fn simulate_runs(model: &CtLstm, cfg: &SimConfig, exec: Exec) -> Result<Vec<SimRun>> {
    cfg.validate()?;
    exec.map_range(cfg.runs, |r| simulate_stream(model, cfg, r)).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountReport {
    pub totals: Vec<u64>,
    pub per_run: Vec<Vec<u64>>,
}

impl CountReport {
    pub fn total_events(&self) -> u64 {
        self.totals.iter().sum()
    }

    /// Per-run breakdown: `run,` followed by one column per type label.
    pub fn per_run_csv(&self) -> String {
        let m = self.totals.len();
        let mut out = String::from("run");
        for k in 0..m {
            let label = EventType::from_index(k).map_or_else(|| format!("type{}", k + 1), |t| t.label().to_string());
            let _ = write!(out, ",{label}");
        }
        out.push('\n');
        for (r, row) in self.per_run.iter().enumerate() {
            let _ = write!(out, "{}", r + 1);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// Cumulative per-type counts over all runs.
pub fn count_report(runs: &[SimRun], num_types: usize) -> Result<CountReport> {
    if runs.is_empty() {
        return Err(SimError::NoRuns);
    }
    let per_run: Vec<Vec<u64>> = runs
        .iter()
        .map(|r| {
            let mut c = vec![0u64; num_types];
            for &(_, k) in &r.events {
                c[k] += 1;
            }
            c
        })
        .collect();
    let totals = (0..num_types).map(|k| per_run.iter().map(|r| r[k]).sum()).collect();
    Ok(CountReport { totals, per_run })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Architecture;
    use crate::nn::{softplus_inv, ParamId};
    use crate::rng::seeded;

    fn frozen(rates: &[f64]) -> CtLstm {
        let arch = Architecture { num_types: rates.len(), hidden: 2, num_states: 3 };
        let mut m = CtLstm::new(arch, &mut seeded(0), None).unwrap();
        m.params_mut().get_mut(ParamId(3)).data_mut().iter_mut().for_each(|x| *x = 0.0);
        let b = m.params_mut().get_mut(ParamId(4));
        for (x, r) in b.data_mut().iter_mut().zip(rates) {
            *x = softplus_inv(*r);
        }
        m
    }

    #[test]
    fn single_run_counts_sum_to_length() {
        let m = frozen(&[1.0; 12]);
        let cfg = SimConfig { runs: 1, horizon: HorizonMode::Events(300), ..Default::default() };
        let runs = simulate_runs(&m, &cfg, Exec::Sequential).unwrap();
        let rep = count_report(&runs, 12).unwrap();
        assert_eq!(rep.total_events(), 300);
        assert!(runs[0].events.windows(2).all(|w| w[1].0 > w[0].0));
        assert_eq!(runs[0].stats.violations, 0);
    }

    #[test]
    fn identical_seeds_identical_counts() {
        let m = frozen(&[0.5, 1.5, 1.0]);
        let cfg = SimConfig { runs: 3, horizon: HorizonMode::Seconds(50.0), seed: 8, ..Default::default() };
        let a = count_report(&simulate_runs(&m, &cfg, Exec::Parallel).unwrap(), 3).unwrap();
        let b = count_report(&simulate_runs(&m, &cfg, Exec::Sequential).unwrap(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_run_set_is_an_error() {
        assert!(matches!(count_report(&[], 12), Err(SimError::NoRuns)));
    }

    #[test]
    fn markov_fit_normalises_rows() {
        let p = fit_markov(&[1, 1, 2, 1, 0, 0, 1]);
        assert_eq!(p[2], [0.0, 1.0, 0.0]);
        assert!((p[1][1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(fit_markov(&[]), [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = SimConfig { safety: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
