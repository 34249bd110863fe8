use super::{MmError, Result};
use crate::events::{EventType, LobEvent, MidChange};
use crate::midprice::{PathStep, PricePath};
use crate::rng::{seeded, SimRng};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmConfig {
    pub q_max: i32,
    /// Trade size per fill.
    pub dq: i32,
    /// Fill probability for a resting quote hit by a non-aggressive market order.
    pub p: f64,
    /// Inventory penalty per unit of inventory per second.
    pub psi: f64,
    pub train_len: usize,
    pub test_len: usize,
    pub seed: u64,
}

impl Default for MmConfig {
    fn default() -> Self {
        Self { q_max: 5, dq: 1, p: 0.2, psi: 0.001, train_len: 5000, test_len: 2500, seed: 0 }
    }
}

impl MmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q_max < 1 {
            return Err(MmError::Config(format!("q_max must be at least 1, got {}", self.q_max)));
        }
        if self.dq < 1 || self.dq > self.q_max {
            return Err(MmError::Config(format!("trade size must be in 1..=q_max, got {}", self.dq)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(MmError::Config(format!("fill probability must be in [0, 1], got {}", self.p)));
        }
        if !(self.psi >= 0.0) || !self.psi.is_finite() {
            return Err(MmError::Config(format!("inventory penalty must be finite and >= 0, got {}", self.psi)));
        }
        if self.train_len == 0 || self.test_len == 0 {
            return Err(MmError::Config("train and test lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Quoting decision for one event.
///
/// The agent chooses among the first three (scalar actions -1, 0, +1);
/// `Idle` withdraws both quotes and is only used by fixed baseline policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// -1: quote the ask only.
    AskOnly,
    /// 0: quote both sides, minus any side that would breach the inventory cap.
    Both,
    /// +1: quote the bid only.
    BidOnly,
    Idle,
}

impl Action {
    pub const AGENT: [Action; 3] = [Action::AskOnly, Action::Both, Action::BidOnly];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::AGENT.get(i).copied()
    }

    pub fn index(self) -> Option<usize> {
        Self::AGENT.iter().position(|&a| a == self)
    }

    pub fn value(self) -> Option<i8> {
        self.index().map(|i| i as i8 - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FillSide {
    Bid,
    Ask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FillKind {
    Adverse,
    NonAdverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillRecord {
    pub step: usize,
    pub time: f64,
    pub side: FillSide,
    pub kind: FillKind,
    pub trigger: EventType,
    pub price: f64,
}

impl FillRecord {
    /// Adverse fills come from price-moving market orders, the rest from flat ones.
    pub fn trigger_consistent(&self) -> bool {
        use EventType::*;
        match (self.kind, self.side) {
            (FillKind::Adverse, FillSide::Ask) => self.trigger == MarketBuyUp,
            (FillKind::Adverse, FillSide::Bid) => self.trigger == MarketSellDown,
            (FillKind::NonAdverse, FillSide::Ask) => self.trigger == MarketBuyFlat,
            (FillKind::NonAdverse, FillSide::Bid) => self.trigger == MarketSellFlat,
        }
    }
}

/// Events and midprice moves replayed by the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketStream {
    /// Midprice before the first step, in half-ticks.
    pub v0: i64,
    pub half_tick: f64,
    /// Time origin for the first inventory-holding interval.
    pub start_time: f64,
    pub steps: Vec<PathStep>,
}

impl MarketStream {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Mean and standard deviation of the midprice over the stream, in currency.
    pub fn price_moments(&self) -> (f64, f64) {
        let prices: Vec<f64> = self.steps.iter().map(|s| s.v as f64 * self.half_tick).collect();
        if prices.is_empty() {
            return (self.v0 as f64 * self.half_tick, 0.0);
        }
        let sd = if prices.len() > 1 { crate::stats::std_dev(&prices) } else { 0.0 };
        (crate::stats::mean(&prices), sd)
    }
}

impl From<&PricePath> for MarketStream {
    fn from(p: &PricePath) -> Self {
        let start_time = p.steps.first().map_or(0.0, |s| s.time);
        Self { v0: p.v0, half_tick: p.half_tick(), start_time, steps: p.steps.clone() }
    }
}

/// `len` steps of `path` starting at step `start`.
pub fn segment(path: &PricePath, start: usize, len: usize) -> Result<MarketStream> {
    let end = start + len;
    if end > path.steps.len() {
        return Err(MmError::StreamExhausted { available: path.steps.len().saturating_sub(start), needed: len });
    }
    let (v0, start_time) = match start {
        0 => (path.v0, path.steps.first().map_or(0.0, |s| s.time)),
        _ => (path.steps[start - 1].v, path.steps[start - 1].time),
    };
    Ok(MarketStream { v0, half_tick: path.half_tick(), start_time, steps: path.steps[start..end].to_vec() })
}

/// Stream from classified real events and their observed midprice changes.
pub fn observed_stream(events: &[LobEvent], mids: &[MidChange], tick: f64) -> Result<MarketStream> {
    if events.len() != mids.len() || events.is_empty() {
        return Err(MmError::Config(format!("{} events vs {} midprice records", events.len(), mids.len())));
    }
    let v0 = mids[0].before;
    let mut v = v0;
    let steps = events
        .iter()
        .zip(mids)
        .map(|(e, m)| {
            let jump = m.after - m.before;
            v += jump;
            PathStep { time: e.time, etype: e.etype, jump, v }
        })
        .collect();
    Ok(MarketStream { v0, half_tick: tick / 2.0, start_time: events[0].time, steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmState {
    /// Steps taken so far.
    pub step: usize,
    pub time: f64,
    /// Midprice in half-ticks.
    pub v: i64,
    /// Midprice in currency.
    pub price: f64,
    pub q: i32,
    pub cash: f64,
    pub bid_on: bool,
    pub ask_on: bool,
}

impl MmState {
    pub fn wealth(&self) -> f64 {
        f64::from(self.q) * self.price + self.cash
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub penalty: f64,
    pub fills: Vec<FillRecord>,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub time: f64,
    pub event: EventType,
    pub action: Action,
    pub fills: u8,
    pub q: i32,
    pub cash: f64,
    pub price: f64,
    pub reward: f64,
}

/// One episode over the first `len` events of a stream.
#[derive(Debug, Clone)]
pub struct MmEnv<'a> {
    cfg: MmConfig,
    stream: &'a MarketStream,
    len: usize,
    state: MmState,
    rng: SimRng,
    wealth: f64,
}

impl<'a> MmEnv<'a> {
    pub fn new(cfg: &MmConfig, stream: &'a MarketStream, len: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if stream.len() < len {
            return Err(MmError::StreamExhausted { available: stream.len(), needed: len });
        }
        let price = stream.v0 as f64 * stream.half_tick;
        let state = MmState {
            step: 0,
            time: stream.start_time,
            v: stream.v0,
            price,
            q: 0,
            cash: 0.0,
            bid_on: false,
            ask_on: false,
        };
        Ok(Self { cfg: cfg.clone(), stream, len, state, rng: seeded(seed), wealth: 0.0 })
    }

    pub fn state(&self) -> &MmState {
        &self.state
    }

    pub fn config(&self) -> &MmConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn done(&self) -> bool {
        self.state.step >= self.len
    }

    /// Incrementally tracked wealth.
    pub fn tracked_wealth(&self) -> f64 {
        self.wealth
    }

    /// `|tracked W - (Q V + C)|`.
    pub fn wealth_error(&self) -> f64 {
        (self.wealth - self.state.wealth()).abs()
    }

    fn can_sell(&self) -> bool {
        self.state.q - self.cfg.dq >= -self.cfg.q_max
    }

    fn can_buy(&self) -> bool {
        self.state.q + self.cfg.dq <= self.cfg.q_max
    }

    /// Legality of `[AskOnly, Both, BidOnly]` at the current inventory.
    pub fn legal_mask(&self) -> [bool; 3] {
        [self.can_sell(), true, self.can_buy()]
    }

    pub fn is_legal(&self, a: Action) -> bool {
        match a.index() {
            Some(i) => self.legal_mask()[i],
            None => true,
        }
    }

    /// Apply `action`, then the next event and its midprice move.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done() {
            return Err(MmError::Finished);
        }
        if !self.is_legal(action) {
            return Err(MmError::IllegalAction { action, q: self.state.q });
        }
        let (sell, buy) = (self.can_sell(), self.can_buy());
        let (bid_on, ask_on) = match action {
            Action::AskOnly => (false, true),
            Action::Both => (buy, sell),
            Action::BidOnly => (true, false),
            Action::Idle => (false, false),
        };
        let ev = self.stream.steps[self.state.step];
        let hs = self.stream.half_tick;
        let dq = self.cfg.dq;
        let w_before = self.wealth;
        let dt = (ev.time - self.state.time).max(0.0);
        let penalty = self.cfg.psi * f64::from(self.state.q.abs()) * dt;

        let mut fills = Vec::new();
        let hit = |kind, side, price| FillRecord { step: self.state.step, time: ev.time, side, kind, trigger: ev.etype, price };
        let ask_kind = match ev.etype {
            EventType::MarketBuyUp => Some(FillKind::Adverse),
            EventType::MarketBuyFlat => Some(FillKind::NonAdverse),
            _ => None,
        };
        let bid_kind = match ev.etype {
            EventType::MarketSellDown => Some(FillKind::Adverse),
            EventType::MarketSellFlat => Some(FillKind::NonAdverse),
            _ => None,
        };
        let price = self.state.price;
        if let (true, Some(kind)) = (ask_on, ask_kind) {
            if kind == FillKind::Adverse || self.rng.random::<f64>() < self.cfg.p {
                fills.push(hit(kind, FillSide::Ask, price + hs));
            }
        }
        if let (true, Some(kind)) = (bid_on, bid_kind) {
            if kind == FillKind::Adverse || self.rng.random::<f64>() < self.cfg.p {
                fills.push(hit(kind, FillSide::Bid, price - hs));
            }
        }
        for f in &fills {
            let (sign, edge) = match f.side {
                FillSide::Ask => (-1, f.price - price),
                FillSide::Bid => (1, price - f.price),
            };
            self.state.q += sign * dq;
            self.state.cash -= f64::from(sign * dq) * f.price;
            self.wealth += f64::from(dq) * edge;
        }

        let new_v = self.state.v + ev.jump;
        let new_price = new_v as f64 * hs;
        self.wealth += f64::from(self.state.q) * (new_price - price);
        self.state.v = new_v;
        self.state.price = new_price;
        self.state.time = ev.time;
        self.state.bid_on = bid_on;
        self.state.ask_on = ask_on;
        self.state.step += 1;

        Ok(StepOutcome { reward: self.wealth - w_before - penalty, penalty, fills, done: self.done() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmEpisode {
    pub rewards: Vec<f64>,
    pub fills: Vec<FillRecord>,
    pub initial_wealth: f64,
    pub terminal_wealth: f64,
    pub penalty: f64,
    pub final_q: i32,
    pub max_abs_q: i32,
    pub max_wealth_error: f64,
    pub log: Vec<StepLog>,
}

impl MmEpisode {
    /// `W_T - W_0 - psi * sum |Q| dt`.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn count(&self, kind: FillKind) -> usize {
        self.fills.iter().filter(|f| f.kind == kind).count()
    }

    pub fn log_csv(&self) -> String {
        let mut s = String::from("step,time,event,action,fills,q,cash,price,reward\n");
        for l in &self.log {
            let a = l.action.value().map_or("idle".to_string(), |v| v.to_string());
            let _ = writeln!(
                s,
                "{},{:.9},{},{a},{},{},{},{},{}",
                l.step, l.time, l.event.label(), l.fills, l.q, l.cash, l.price, l.reward
            );
        }
        s
    }

    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.log_csv())?;
        Ok(())
    }
}

/// Replay `len` events of `stream` under `policy`, which sees the state and
/// the legality mask of the three agent actions.
pub fn run_episode<F>(mut policy: F, stream: &MarketStream, cfg: &MmConfig, len: usize, seed: u64) -> Result<MmEpisode>
where
    F: FnMut(&MmState, [bool; 3]) -> Action,
{
    let mut env = MmEnv::new(cfg, stream, len, seed)?;
    let initial_wealth = env.tracked_wealth();
    let mut ep = MmEpisode {
        rewards: Vec::with_capacity(len),
        fills: Vec::new(),
        initial_wealth,
        terminal_wealth: initial_wealth,
        penalty: 0.0,
        final_q: 0,
        max_abs_q: 0,
        max_wealth_error: 0.0,
        log: Vec::with_capacity(len),
    };
    while !env.done() {
        let action = policy(env.state(), env.legal_mask());
        let out = env.step(action)?;
        let s = env.state();
        ep.log.push(StepLog {
            step: s.step - 1,
            time: s.time,
            event: stream.steps[s.step - 1].etype,
            action,
            fills: out.fills.len() as u8,
            q: s.q,
            cash: s.cash,
            price: s.price,
            reward: out.reward,
        });
        ep.rewards.push(out.reward);
        ep.penalty += out.penalty;
        ep.fills.extend(out.fills);
        ep.max_abs_q = ep.max_abs_q.max(s.q.abs());
        ep.max_wealth_error = ep.max_wealth_error.max(env.wealth_error());
    }
    ep.terminal_wealth = env.tracked_wealth();
    ep.final_q = env.state().q;
    Ok(ep)
}

/// Total adverse over total non-adverse fills; `None` without non-adverse fills.
pub fn fill_ratio(episodes: &[MmEpisode]) -> Option<f64> {
    let adverse: usize = episodes.iter().map(|e| e.count(FillKind::Adverse)).sum();
    let non: usize = episodes.iter().map(|e| e.count(FillKind::NonAdverse)).sum();
    (non > 0).then(|| adverse as f64 / non as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use EventType::*;

    fn stream(types: &[EventType], jumps: &[i64], v0: i64) -> MarketStream {
        let mut v = v0;
        let steps = types
            .iter()
            .zip(jumps)
            .enumerate()
            .map(|(k, (&etype, &jump))| {
                v += jump;
                PathStep { time: k as f64 + 1.0, etype, jump, v }
            })
            .collect();
        MarketStream { v0, half_tick: 0.005, start_time: 0.0, steps }
    }

    #[test]
    fn aggressive_buy_fills_the_ask_at_the_pre_jump_quote() {
        // Midprice 100.000 -> ask quote 100.005.
        let s = stream(&[MarketBuyUp], &[1], 20_000);
        let cfg = MmConfig::default();
        let mut env = MmEnv::new(&cfg, &s, 1, 0).unwrap();
        let out = env.step(Action::AskOnly).unwrap();
        assert_eq!(out.fills.len(), 1);
        let f = out.fills[0];
        assert_eq!((f.side, f.kind, f.trigger), (FillSide::Ask, FillKind::Adverse, MarketBuyUp));
        assert!((f.price - 100.005).abs() < 1e-12);
        assert_eq!(env.state().q, -1);
        assert!((env.state().cash - 100.005).abs() < 1e-12);
        // Spread earned, then the move against the short.
        assert!((out.reward - (0.005 - 0.005)).abs() < 1e-12);
        assert!(env.wealth_error() < 1e-9);
    }

    #[test]
    fn flat_sell_fills_the_bid_with_probability_p() {
        let n = 20_000;
        let s = stream(&vec![MarketSellFlat; n], &vec![0; n], 20_000);
        let cfg = MmConfig { q_max: n as i32, ..Default::default() };
        let ep = run_episode(|_, _| Action::BidOnly, &s, &cfg, n, 3).unwrap();
        let fills = ep.count(FillKind::NonAdverse);
        let p = fills as f64 / n as f64;
        assert!((p - 0.2).abs() < 4.0 * (0.2 * 0.8 / n as f64).sqrt(), "{p}");
        assert!(ep.fills.iter().all(|f| f.side == FillSide::Bid && f.trigger_consistent()));
    }

    #[test]
    fn idle_policy_earns_nothing() {
        let types = [LimitBuyUp, MarketBuyUp, MarketSellFlat, SellCancelUp, MarketSellDown];
        let s = stream(&types, &[2, 3, 0, 1, -4], 20_000);
        let ep = run_episode(|_, _| Action::Idle, &s, &MmConfig::default(), 5, 0).unwrap();
        assert!(ep.fills.is_empty());
        assert_eq!(ep.total_reward(), 0.0);
        assert_eq!(ep.penalty, 0.0);
    }

    #[test]
    fn aggressive_buys_fill_until_the_cap() {
        // 8 aggressive buys among flat limit orders; quoting both sides sells
        // until Q = -3 and then stops quoting the ask.
        let mut types = vec![LimitBuyFlat; 10];
        for k in [0, 1, 2, 4, 5, 6, 8, 9] {
            types[k] = MarketBuyUp;
        }
        let jumps: Vec<i64> = types.iter().map(|t| i64::from(*t == MarketBuyUp)).collect();
        let s = stream(&types, &jumps, 20_000);
        let cfg = MmConfig { q_max: 3, ..Default::default() };
        let ep = run_episode(|_, _| Action::Both, &s, &cfg, 10, 0).unwrap();
        assert_eq!(ep.count(FillKind::Adverse), 3);
        assert_eq!(ep.final_q, -3);
        // Hand accounting: short 1 from step 0 to 1, 2 from 1 to 2, 3 after.
        let penalty = 0.001 * (1.0 + 2.0 + 3.0 * 7.0);
        assert!((ep.penalty - penalty).abs() < 1e-12);
        // Sold at 100.005, 100.010, 100.015; terminal mid 100.040.
        let pnl = (100.005 + 100.010 + 100.015) - 3.0 * 100.040;
        assert!((ep.terminal_wealth - pnl).abs() < 1e-9);
        assert!((ep.total_reward() - (pnl - penalty)).abs() < 1e-9);
    }

    #[test]
    fn illegal_action_is_rejected() {
        let s = stream(&[MarketSellDown, MarketSellDown], &[-1, -1], 20_000);
        let cfg = MmConfig { q_max: 1, ..Default::default() };
        let mut env = MmEnv::new(&cfg, &s, 2, 0).unwrap();
        env.step(Action::BidOnly).unwrap();
        assert_eq!(env.state().q, 1);
        assert_eq!(env.legal_mask(), [true, true, false]);
        assert!(matches!(env.step(Action::BidOnly), Err(MmError::IllegalAction { q: 1, .. })));
        env.step(Action::Both).unwrap();
        assert_eq!(env.state().q, 1);
        assert!(matches!(env.step(Action::Both), Err(MmError::Finished)));
    }

    #[test]
    fn short_stream_is_an_error() {
        let s = stream(&[MarketSellDown], &[-1], 20_000);
        assert!(matches!(
            run_episode(|_, _| Action::Both, &s, &MmConfig::default(), 2, 0),
            Err(MmError::StreamExhausted { available: 1, needed: 2 })
        ));
    }

    #[test]
    fn ratio_of_fill_kinds() {
        let f = |kind| FillRecord { step: 0, time: 0.0, side: FillSide::Ask, kind, trigger: MarketBuyUp, price: 1.0 };
        let mut ep = run_episode(|_, _| Action::Idle, &stream(&[LimitBuyFlat], &[0], 10), &MmConfig::default(), 1, 0).unwrap();
        assert_eq!(fill_ratio(std::slice::from_ref(&ep)), None);
        ep.fills = [vec![f(FillKind::Adverse); 6], vec![f(FillKind::NonAdverse); 3]].concat();
        assert_eq!(fill_ratio(&[ep]), Some(2.0));
    }

    #[test]
    fn segments_carry_the_preceding_price() {
        let p = PricePath {
            v0: 100,
            tick: 0.01,
            steps: vec![
                PathStep { time: 1.0, etype: MarketBuyUp, jump: 2, v: 102 },
                PathStep { time: 2.0, etype: LimitBuyFlat, jump: 0, v: 102 },
            ],
            clamped: 0,
        };
        let s = segment(&p, 1, 1).unwrap();
        assert_eq!((s.v0, s.start_time, s.len()), (102, 1.0, 1));
        assert!(segment(&p, 1, 2).is_err());
    }
}
