//! Synthetic LOBSTER-format message/orderbook pairs with a known ground truth.
//!
//! A type sequence (from any source, typically a 12-type Hawkes process
//! calibrated to a per-asset event mix) is realised on a one-level book. Each
//! event becomes one LOBSTER message whose book transition reproduces the
//! event's type and midprice jump. When the book cannot realise an event as
//! drawn (an inside-spread order with a one-tick spread, a partial fill of a
//! one-share level), the closest feasible event is written instead; the
//! manifest always records what was actually written.

use crate::events::{Direction, EventType};
use crate::hawkes::{self, HawkesModel, Transfer};
use crate::midprice::JumpTable;
use crate::rng::{derive_seed, seeded, SimRng};
use crate::thinning::Horizon;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Per-type event counts for one trading day (June 21, 2012), canonical order.
pub const DAY_COUNTS: [(&str, [u64; 12]); 5] = [
    ("AAPL", [16805, 17474, 5876, 6227, 8969, 8999, 65714, 91021, 12385, 10502, 65830, 90588]),
    ("AMZN", [6611, 6993, 1871, 2368, 5013, 4701, 56792, 61588, 3644, 3535, 56413, 60248]),
    ("GOOG", [6496, 6381, 1748, 2111, 3904, 3444, 27626, 30755, 4121, 3697, 27839, 29793]),
    ("INTC", [739, 869, 725, 695, 95, 94, 162421, 140761, 17939, 13123, 153903, 132675]),
    ("MSFT", [951, 1078, 931, 888, 104, 108, 153972, 173565, 15784, 15811, 144480, 161092]),
];

/// Trading session length in seconds (9:30 to 16:00).
pub const SESSION_SECONDS: f64 = 23_400.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetProfile {
    pub name: String,
    pub counts: [u64; 12],
    /// Starting midprice in dollars.
    pub price: f64,
    /// Jump sizes follow `p(j) ~ j^-exponent` on `1..=max_jump` half-ticks.
    pub jump_exponent: f64,
    pub max_jump: u32,
    /// Share of the stationary rate that comes from excitation.
    pub branching: f64,
    /// Kernel decay rate (1/s).
    pub decay: f64,
}

impl AssetProfile {
    pub fn named(name: &str) -> Option<Self> {
        let (_, counts) = DAY_COUNTS.iter().find(|(n, _)| *n == name)?;
        let (price, jump_exponent, max_jump) = match name {
            "AAPL" => (585.0, 1.2, 50),
            "AMZN" => (220.0, 1.4, 40),
            "GOOG" => (565.0, 1.2, 50),
            "INTC" => (25.8, 3.0, 4),
            _ => (30.7, 3.0, 4),
        };
        Some(Self {
            name: name.to_string(),
            counts: *counts,
            price,
            jump_exponent,
            max_jump,
            branching: 0.6,
            decay: 5.0,
        })
    }

    /// Mean event rates per type over the session.
    pub fn rates(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / SESSION_SECONDS).collect()
    }

    pub fn jump_table(&self) -> JumpTable {
        let w: Vec<f64> = (1..=self.max_jump).map(|j| (j as f64).powf(-self.jump_exponent)).collect();
        let s: f64 = w.iter().sum();
        let mut probs: Vec<f64> = w.iter().map(|x| x / s).collect();
        let r: f64 = probs.iter().sum();
        probs[0] += 1.0 - r;
        JumpTable::new((1..=self.max_jump).collect(), probs).expect("valid Zipf table")
    }

    /// Linear Hawkes model whose stationary rates equal [`AssetProfile::rates`].
    ///
    /// Half of the excitation is shared (every event raises every type in
    /// proportion to its rate) and half is self-excitation.
    pub fn hawkes(&self) -> HawkesModel {
        let r = self.rates();
        let total: f64 = r.iter().sum();
        let m = r.len();
        let (shared, own) = (self.branching / 2.0, self.branching / 2.0);
        let mut alpha = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                let a = shared * r[i] / total + if i == j { own } else { 0.0 };
                alpha[i][j] = a * self.decay;
            }
        }
        // (I - A) r with A r = (shared + own) r.
        let base = r.iter().map(|x| x * (1.0 - self.branching)).collect();
        HawkesModel::new(base, alpha, vec![vec![self.decay; m]; m], Transfer::Identity).expect("valid profile model")
    }
}

/// One event to be written: time in seconds after the session open, type and
/// absolute midprice move in half-ticks (ignored for flat types).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthEvent {
    pub time: f64,
    pub etype: EventType,
    pub jump: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RealiseConfig {
    /// Seconds after midnight of the session open.
    pub open: f64,
    /// Tick in 1e-4 dollar units.
    pub tick_raw: i64,
    /// Probability of a hidden execution (discarded type 5) before an event.
    pub hidden_prob: f64,
    pub seed: u64,
}

impl Default for RealiseConfig {
    fn default() -> Self {
        Self { open: 34_200.0, tick_raw: 100, hidden_prob: 0.01, seed: 0 }
    }
}

/// Ground truth for a written fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub asset: String,
    pub tick_raw: i64,
    /// Message rows written, including the leading row that only seeds the book.
    pub rows: usize,
    /// Classified events per type label, canonical order.
    pub counts: BTreeMap<String, u64>,
    pub seed_rows: usize,
    pub hidden_executions: usize,
    /// Drawn events written as a different type.
    pub substitutions: usize,
    pub jumps_up: BTreeMap<u32, u64>,
    pub jumps_down: BTreeMap<u32, u64>,
}

impl FixtureManifest {
    pub fn count_vector(&self) -> [u64; 12] {
        let mut out = [0; 12];
        for t in EventType::ALL {
            out[t.index()] = self.counts.get(t.label()).copied().unwrap_or(0);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LobsterFixture {
    pub messages: String,
    pub orderbook: String,
    pub manifest: FixtureManifest,
    /// Events as written, in order.
    pub events: Vec<SynthEvent>,
}

struct Book {
    bid: i64,
    ask: i64,
    vb: u64,
    va: u64,
}

fn lot(rng: &mut SimRng, lo: u64, hi: u64) -> u64 {
    100 * rng.random_range(lo..=hi)
}

/// Realise `events` on a one-level book starting at `price` dollars.
pub fn realise(asset: &str, events: &[SynthEvent], price: f64, cfg: &RealiseConfig) -> LobsterFixture {
    let mut rng = seeded(cfg.seed);
    let tick = cfg.tick_raw;
    let bid0 = (price * 10_000.0 / tick as f64).floor() as i64;
    let mut book = Book { bid: bid0, ask: bid0 + 1, vb: lot(&mut rng, 2, 10), va: lot(&mut rng, 2, 10) };
    let mut msgs = String::new();
    let mut books = String::new();
    let mut order_id = 1_000_000u64;
    let mut manifest = FixtureManifest {
        asset: asset.to_string(),
        tick_raw: tick,
        rows: 0,
        counts: EventType::ALL.iter().map(|t| (t.label().to_string(), 0)).collect(),
        seed_rows: 1,
        hidden_executions: 0,
        substitutions: 0,
        jumps_up: BTreeMap::new(),
        jumps_down: BTreeMap::new(),
    };
    let mut written = Vec::with_capacity(events.len());

    let emit = |msgs: &mut String, books: &mut String, t: f64, kind: u8, id: u64, size: u64, p: i64, dir: i8, b: &Book| {
        let _ = writeln!(msgs, "{:.9},{kind},{id},{size},{},{dir}", cfg.open + t, p * tick);
        let _ = writeln!(books, "{},{},{},{}", b.ask * tick, b.va, b.bid * tick, b.vb);
    };

    // Seed row: the opening bid. Ingest discards it for lack of a prior book.
    let t0 = events.first().map_or(0.0, |e| e.time) * 0.5;
    emit(&mut msgs, &mut books, t0, 1, order_id, book.vb, book.bid, 1, &book);
    manifest.rows += 1;

    for e in events {
        if rng.random::<f64>() < cfg.hidden_prob {
            order_id += 1;
            let buy = rng.random::<bool>();
            let (p, dir) = if buy { (book.ask, -1) } else { (book.bid, 1) };
            emit(&mut msgs, &mut books, e.time, 5, order_id, 100, p, dir, &book);
            manifest.hidden_executions += 1;
            manifest.rows += 1;
        }
        order_id += 1;
        let spread = book.ask - book.bid;
        let mut etype = e.etype;
        let mut jump = i64::from(e.jump.max(1));
        // Fall back to the flat version of an order that cannot fit inside the spread.
        if matches!(etype, EventType::LimitBuyUp | EventType::LimitSellDown) {
            if spread < 2 {
                etype = if etype == EventType::LimitBuyUp { EventType::LimitBuyFlat } else { EventType::LimitSellFlat };
            } else {
                // Close at least half the gap so the spread stays near one tick.
                jump = jump.max(spread / 2).min(spread - 1);
            }
        }
        if etype == EventType::MarketBuyFlat && book.va < 2 {
            etype = EventType::LimitSellFlat;
        }
        if etype == EventType::MarketSellFlat && book.vb < 2 {
            etype = EventType::LimitBuyFlat;
        }
        if etype != e.etype {
            manifest.substitutions += 1;
        }
        let (kind, size, p, dir): (u8, u64, i64, i8) = match etype {
            EventType::LimitBuyUp => {
                let size = lot(&mut rng, 1, 5);
                book.bid += jump;
                book.vb = size;
                (1, size, book.bid, 1)
            }
            EventType::LimitSellDown => {
                let size = lot(&mut rng, 1, 5);
                book.ask -= jump;
                book.va = size;
                (1, size, book.ask, -1)
            }
            EventType::MarketBuyUp => {
                let (p, size) = (book.ask, book.va);
                book.ask += jump;
                book.va = lot(&mut rng, 1, 10);
                (4, size, p, -1)
            }
            EventType::MarketSellDown => {
                let (p, size) = (book.bid, book.vb);
                book.bid -= jump;
                book.vb = lot(&mut rng, 1, 10);
                (4, size, p, 1)
            }
            EventType::BuyCancelDown => {
                let (p, size) = (book.bid, book.vb);
                book.bid -= jump;
                book.vb = lot(&mut rng, 1, 10);
                (3, size, p, 1)
            }
            EventType::SellCancelUp => {
                let (p, size) = (book.ask, book.va);
                book.ask += jump;
                book.va = lot(&mut rng, 1, 10);
                (3, size, p, -1)
            }
            EventType::LimitBuyFlat => {
                let size = lot(&mut rng, 1, 5);
                book.vb += size;
                (1, size, book.bid, 1)
            }
            EventType::LimitSellFlat => {
                let size = lot(&mut rng, 1, 5);
                book.va += size;
                (1, size, book.ask, -1)
            }
            EventType::MarketBuyFlat => {
                let size = rng.random_range(1..book.va);
                book.va -= size;
                (4, size, book.ask, -1)
            }
            EventType::MarketSellFlat => {
                let size = rng.random_range(1..book.vb);
                book.vb -= size;
                (4, size, book.bid, 1)
            }
            EventType::BuyCancelFlat => {
                if book.vb >= 2 {
                    let size = rng.random_range(1..book.vb);
                    book.vb -= size;
                    (2, size, book.bid, 1)
                } else {
                    (3, 100, book.bid - rng.random_range(1..=5), 1)
                }
            }
            EventType::SellCancelFlat => {
                if book.va >= 2 {
                    let size = rng.random_range(1..book.va);
                    book.va -= size;
                    (2, size, book.ask, -1)
                } else {
                    (3, 100, book.ask + rng.random_range(1..=5), -1)
                }
            }
        };
        emit(&mut msgs, &mut books, e.time, kind, order_id, size, p, dir, &book);
        manifest.rows += 1;
        *manifest.counts.get_mut(etype.label()).expect("all labels present") += 1;
        let j = match etype.direction() {
            Direction::Up => {
                *manifest.jumps_up.entry(jump as u32).or_default() += 1;
                jump as u32
            }
            Direction::Down => {
                *manifest.jumps_down.entry(jump as u32).or_default() += 1;
                jump as u32
            }
            Direction::None => 0,
        };
        written.push(SynthEvent { time: e.time, etype, jump: j });
    }
    LobsterFixture { messages: msgs, orderbook: books, manifest, events: written }
}

/// Draw `n` events from the profile's Hawkes model with Zipf jump sizes.
pub fn draw_events(profile: &AssetProfile, n: usize, seed: u64) -> Vec<SynthEvent> {
    let model = profile.hawkes();
    let out = hawkes::simulate(&model, Horizon::events(n), derive_seed(seed, 1)).expect("stable profile model");
    let table = profile.jump_table();
    let mut rng = seeded(derive_seed(seed, 2));
    out.events
        .iter()
        .map(|&(time, k)| {
            let etype = EventType::from_index(k).expect("twelve types");
            let jump = if etype.is_aggressive() { table.sample(&mut rng) } else { 0 };
            SynthEvent { time, etype, jump }
        })
        .collect()
}

/// Full fixture for a named asset.
pub fn generate_asset(profile: &AssetProfile, n: usize, seed: u64) -> LobsterFixture {
    let events = draw_events(profile, n, seed);
    let cfg = RealiseConfig { seed: derive_seed(seed, 3), ..Default::default() };
    realise(&profile.name, &events, profile.price, &cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixturePaths {
    pub messages: PathBuf,
    pub orderbook: PathBuf,
    pub manifest: PathBuf,
}

/// Write `{asset}_message_1.csv`, `{asset}_orderbook_1.csv` and
/// `{asset}_manifest.json` into `dir`.
pub fn write_fixture(dir: &Path, fx: &LobsterFixture) -> std::io::Result<FixturePaths> {
    std::fs::create_dir_all(dir)?;
    let a = &fx.manifest.asset;
    let paths = FixturePaths {
        messages: dir.join(format!("{a}_message_1.csv")),
        orderbook: dir.join(format!("{a}_orderbook_1.csv")),
        manifest: dir.join(format!("{a}_manifest.json")),
    };
    std::fs::write(&paths.messages, &fx.messages)?;
    std::fs::write(&paths.orderbook, &fx.orderbook)?;
    std::fs::write(&paths.manifest, serde_json::to_string_pretty(&fx.manifest).expect("serializes"))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{ingest, parse_lobster, IngestConfig};

    #[test]
    fn profile_model_has_target_stationary_rates() {
        let p = AssetProfile::named("AAPL").unwrap();
        let rates = p.hawkes().stationary_rates().unwrap();
        for (a, b) in rates.iter().zip(p.rates()) {
            assert!((a - b).abs() < 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn written_fixture_classifies_to_manifest() {
        let p = AssetProfile::named("AMZN").unwrap();
        let fx = generate_asset(&p, 2000, 7);
        let dir = tempfile::tempdir().unwrap();
        let paths = write_fixture(dir.path(), &fx).unwrap();
        let parsed = parse_lobster(&paths.messages, &paths.orderbook, None, 1).unwrap();
        assert_eq!(parsed.tick_raw, 100);
        let out = ingest(&parsed, &IngestConfig::default()).unwrap();
        assert_eq!(out.report.counts.counts, fx.manifest.count_vector());
        let types: Vec<_> = out.events.iter().map(|e| e.etype).collect();
        let expected: Vec<_> = fx.events.iter().map(|e| e.etype).collect();
        assert_eq!(types, expected);
        for (m, e) in out.mids.iter().zip(&fx.events) {
            assert_eq!((m.after - m.before).unsigned_abs(), u64::from(e.jump));
        }
    }
}
