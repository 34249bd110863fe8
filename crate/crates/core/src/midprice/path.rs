use super::{JumpDistribution, PriceError, Result};
use crate::events::{Direction, EventType, LobEvent};
use crate::rng::seeded;
use log::warn;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub time: f64,
    pub etype: EventType,
    /// Signed move applied at this event, in half-ticks.
    pub jump: i64,
    /// Midprice after the event, in half-ticks.
    pub v: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePath {
    /// Initial midprice in half-ticks.
    pub v0: i64,
    /// Tick size in currency.
    pub tick: f64,
    pub steps: Vec<PathStep>,
    /// Events whose sampled move was shortened to keep the price at one tick.
    pub clamped: usize,
}

impl PricePath {
    pub fn half_tick(&self) -> f64 {
        self.tick / 2.0
    }

    pub fn to_currency(&self, half_ticks: i64) -> f64 {
        half_ticks as f64 * self.half_tick()
    }

    /// `V_0, V_1, ..., V_n` in currency.
    pub fn prices(&self) -> Vec<f64> {
        std::iter::once(self.v0).chain(self.steps.iter().map(|s| s.v)).map(|v| self.to_currency(v)).collect()
    }

    pub fn terminal(&self) -> f64 {
        self.to_currency(self.steps.last().map_or(self.v0, |s| s.v))
    }

    /// Checks `V_k - V_0 = sum of jumps up to k` and that flat events never move.
    pub fn accounting_holds(&self) -> bool {
        let mut acc = self.v0;
        self.steps.iter().all(|s| {
            acc += s.jump;
            let flat_ok = s.etype.direction() != Direction::None || s.jump == 0;
            acc == s.v && flat_ok
        })
    }
}

fn to_half_ticks(v0: f64, tick: f64) -> Result<i64> {
    if !(tick > 0.0) || !tick.is_finite() {
        return Err(PriceError::Invalid(format!("tick size must be positive, got {tick}")));
    }
    if !(v0 > 0.0) || !v0.is_finite() {
        return Err(PriceError::Invalid(format!("initial price must be positive, got {v0}")));
    }
    Ok((v0 / (tick / 2.0)).round() as i64)
}

/// Midprice path driven by `events`: each up (down) event moves the price by
/// a size drawn from the up (down) table; flat events leave it unchanged.
/// A move that would take the price below one tick is shortened to stop there.
pub fn build_path(events: &[LobEvent], jumps: &JumpDistribution, v0: f64, tick: f64, seed: u64) -> Result<PricePath> {
    let start = to_half_ticks(v0, tick)?;
    let mut rng = seeded(seed);
    let floor = 2;
    let mut v = start;
    let mut clamped = 0;
    let steps = events
        .iter()
        .map(|e| {
            let mut jump = match e.etype.direction() {
                Direction::Up => i64::from(jumps.up.sample(&mut rng)),
                Direction::Down => -i64::from(jumps.down.sample(&mut rng)),
                Direction::None => 0,
            };
            if v + jump < floor {
                warn!("price would reach {} half-ticks at t = {}; clamping at one tick", v + jump, e.time);
                jump = floor - v;
                clamped += 1;
            }
            v += jump;
            PathStep { time: e.time, etype: e.etype, jump, v }
        })
        .collect();
    Ok(PricePath { v0: start, tick, steps, clamped })
}

/// `V(t) = V(0) + (tick / 2) (N_up(t) - N_down(t))`, built directly.
pub fn unit_jump_path(events: &[LobEvent], v0: f64, tick: f64) -> Result<PricePath> {
    let start = to_half_ticks(v0, tick)?;
    let (mut up, mut down) = (0i64, 0i64);
    let steps = events
        .iter()
        .map(|e| {
            let jump = match e.etype.direction() {
                Direction::Up => 1,
                Direction::Down => -1,
                Direction::None => 0,
            };
            up += i64::from(jump == 1);
            down += i64::from(jump == -1);
            PathStep { time: e.time, etype: e.etype, jump, v: start + up - down }
        })
        .collect();
    Ok(PricePath { v0: start, tick, steps, clamped: 0 })
}

/// CSV with columns `time,type,jump,price`; the first data row carries the
/// initial price with type `0`. Prices are in currency.
pub fn write_path_csv(path: &Path, p: &PricePath) -> Result<()> {
    let mut out = String::from("time,type,jump,price\n");
    let t0 = p.steps.first().map_or(0.0, |s| s.time);
    let _ = writeln!(out, "{t0},0,0,{}", p.to_currency(p.v0));
    for s in &p.steps {
        let _ = writeln!(out, "{},{},{},{}", s.time, s.etype.code(), s.jump, p.to_currency(s.v));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a path written by [`write_path_csv`]; the tick size is not stored so
/// it must be supplied.
pub fn read_path_csv(path: &Path, tick: f64) -> Result<PricePath> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let bad = |line: usize, reason: String| PriceError::Malformed { file: file.clone(), line, reason };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "time,type,jump,price" => {}
        _ => return Err(bad(1, "expected header time,type,jump,price".into())),
    }
    let half = tick / 2.0;
    let mut v0 = None;
    let mut steps = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(i + 1, format!("expected 4 fields, got {}", f.len())));
        }
        let time: f64 = f[0].parse().map_err(|_| bad(i + 1, "bad time".into()))?;
        let code: u8 = f[1].parse().map_err(|_| bad(i + 1, "bad type".into()))?;
        let jump: i64 = f[2].parse().map_err(|_| bad(i + 1, "bad jump".into()))?;
        let price: f64 = f[3].parse().map_err(|_| bad(i + 1, "bad price".into()))?;
        let v = (price / half).round() as i64;
        if code == 0 {
            v0 = Some(v);
            continue;
        }
        let etype = EventType::from_code(code).ok_or_else(|| bad(i + 1, format!("unknown type {code}")))?;
        steps.push(PathStep { time, etype, jump, v });
    }
    let v0 = v0.ok_or_else(|| bad(2, "missing initial price row".into()))?;
    Ok(PricePath { v0, tick, steps, clamped: 0 })
}
