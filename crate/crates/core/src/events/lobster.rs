//! LOBSTER message/orderbook file pairs.
//!
//! Message columns: time, type, order id, size, price, direction.
//! Orderbook columns: ask price, ask size, bid price, bid size, repeated per
//! level. Row `i` of the orderbook file is the book after message `i`.
//! Prices are integers in units of 1e-4 dollars.

use super::classify::{classify, imbalance_state, Classification, DiscardReason, MarketStateConfig};
use super::{count_events, EventCounts, EventsError, LobEvent, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

/// LOBSTER placeholder for an empty price level.
const EMPTY_LEVEL_PRICE: i64 = 9_999_999_999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMessage {
    pub time: f64,
    pub kind: u8,
    pub order_id: u64,
    pub size: u64,
    /// Price in 1e-4 dollar units.
    pub price: i64,
    pub direction: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookLevel {
    pub price: i64,
    pub volume: u64,
}

/// Book levels, best first. Prices are integer ticks once converted.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BookSnapshot {
    pub bids: Vec<BookLevel>,
    pub asks: Vec<BookLevel>,
}

impl BookSnapshot {
    pub fn best_bid(&self) -> Option<BookLevel> {
        self.bids.first().copied()
    }

    pub fn best_ask(&self) -> Option<BookLevel> {
        self.asks.first().copied()
    }

    /// Midprice in half-tick units (bid + ask), if both sides are quoted.
    pub fn mid_half_ticks(&self) -> Option<i64> {
        Some(self.best_bid()?.price + self.best_ask()?.price)
    }
}

/// One aligned message/book row. `message` is `None` when the type code is
/// not a LOBSTER code (1..=7); such rows still provide the prior book.
#[derive(Debug, Clone, PartialEq)]
pub struct LobsterRow {
    pub line: usize,
    pub message: Option<RawMessage>,
    pub book: BookSnapshot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLobster {
    pub rows: Vec<LobsterRow>,
    /// Tick size in 1e-4 dollar units.
    pub tick_raw: i64,
    pub unknown_kind: usize,
    /// Prices that were not an integer multiple of the tick (rounded).
    pub misaligned_prices: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EventsError + '_ {
    move |source| EventsError::Io { path: path.display().to_string(), source }
}

fn field<T: std::str::FromStr>(cols: &[&str], idx: usize, file: &Path, line: usize, name: &str) -> Result<T> {
    cols.get(idx)
        .ok_or_else(|| malformed(file, line, format!("missing column {name}")))?
        .trim()
        .parse()
        .map_err(|_| malformed(file, line, format!("bad {name}: {:?}", cols[idx])))
}

fn malformed(file: &Path, line: usize, reason: String) -> EventsError {
    EventsError::Malformed { file: file.display().to_string(), line, reason }
}

fn non_empty_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Parsed message row; `None` for an unknown type code.
fn parse_message(cols: &[&str], file: &Path, line: usize) -> Result<Option<RawMessage>> {
    let time: f64 = field(cols, 0, file, line, "time")?;
    let kind: i64 = field(cols, 1, file, line, "type")?;
    let order_id: u64 = field(cols, 2, file, line, "order id")?;
    let size: i64 = field(cols, 3, file, line, "size")?;
    let price: i64 = field(cols, 4, file, line, "price")?;
    let direction: i8 = field(cols, 5, file, line, "direction")?;
    if !time.is_finite() || time < 0.0 {
        return Err(malformed(file, line, format!("bad time {time}")));
    }
    if direction != 1 && direction != -1 {
        return Err(malformed(file, line, format!("direction must be +-1, got {direction}")));
    }
    if !(1..=7).contains(&kind) {
        return Ok(None);
    }
    Ok(Some(RawMessage {
        time,
        kind: kind as u8,
        order_id,
        size: size.max(0) as u64,
        price,
        direction,
    }))
}

fn parse_book(cols: &[&str], file: &Path, line: usize, max_levels: usize) -> Result<BookSnapshot> {
    if cols.len() < 4 || cols.len() % 4 != 0 {
        return Err(malformed(file, line, format!("expected 4 columns per level, got {}", cols.len())));
    }
    let levels = (cols.len() / 4).min(max_levels.max(1));
    let mut snap = BookSnapshot::default();
    for l in 0..levels {
        let ap: i64 = field(cols, 4 * l, file, line, "ask price")?;
        let av: i64 = field(cols, 4 * l + 1, file, line, "ask size")?;
        let bp: i64 = field(cols, 4 * l + 2, file, line, "bid price")?;
        let bv: i64 = field(cols, 4 * l + 3, file, line, "bid size")?;
        if ap.abs() < EMPTY_LEVEL_PRICE && av > 0 {
            snap.asks.push(BookLevel { price: ap, volume: av as u64 });
        }
        if bp.abs() < EMPTY_LEVEL_PRICE && bv > 0 {
            snap.bids.push(BookLevel { price: bp, volume: bv as u64 });
        }
    }
    if let (Some(b), Some(a)) = (snap.best_bid(), snap.best_ask()) {
        if a.price <= b.price {
            return Err(malformed(file, line, format!("crossed book: bid {} >= ask {}", b.price, a.price)));
        }
    }
    Ok(snap)
}

/// Smallest positive gap between distinct quoted prices.
pub fn infer_tick(prices: impl IntoIterator<Item = i64>) -> Option<i64> {
    let mut ps: Vec<i64> = prices.into_iter().collect();
    ps.sort_unstable();
    ps.dedup();
    ps.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0).min()
}

/// Read and align a LOBSTER pair, converting prices to integer ticks.
///
/// `tick_raw` overrides tick inference (1e-4 dollar units, e.g. 100 for one cent).
pub fn parse_lobster(
    message_file: &Path,
    orderbook_file: &Path,
    tick_raw: Option<i64>,
    max_levels: usize,
) -> Result<ParsedLobster> {
    let msg_lines = non_empty_lines(message_file)?;
    let book_lines = non_empty_lines(orderbook_file)?;
    if msg_lines.len() != book_lines.len() {
        return Err(EventsError::RowCountMismatch { messages: msg_lines.len(), books: book_lines.len() });
    }

    let mut rows = Vec::with_capacity(msg_lines.len());
    let mut unknown_kind = 0;
    for ((line, m), (bline, b)) in msg_lines.iter().zip(&book_lines) {
        let mcols: Vec<&str> = m.split(',').collect();
        let bcols: Vec<&str> = b.split(',').collect();
        let message = parse_message(&mcols, message_file, *line)?;
        if message.is_none() {
            unknown_kind += 1;
        }
        let book = parse_book(&bcols, orderbook_file, *bline, max_levels)?;
        rows.push(LobsterRow { line: *line, message, book });
    }

    let tick = match tick_raw {
        Some(t) if t > 0 => t,
        Some(t) => return Err(EventsError::Config(format!("tick must be positive, got {t}"))),
        None => {
            let book_prices = rows
                .iter()
                .flat_map(|r| r.book.bids.iter().chain(&r.book.asks).map(|l| l.price));
            let msg_prices = rows
                .iter()
                .filter_map(|r| r.message)
                .filter(|m| m.price > 0 && m.price < EMPTY_LEVEL_PRICE)
                .map(|m| m.price);
            infer_tick(book_prices.chain(msg_prices))
                .ok_or_else(|| EventsError::Config("cannot infer tick: fewer than two distinct prices".into()))?
        }
    };

    let mut misaligned = 0;
    let mut to_ticks = |p: i64| {
        if p % tick != 0 {
            misaligned += 1;
        }
        (p as f64 / tick as f64).round() as i64
    };
    for row in &mut rows {
        for level in row.book.bids.iter_mut().chain(row.book.asks.iter_mut()) {
            level.price = to_ticks(level.price);
        }
        if let Some(m) = row.message.as_mut() {
            if m.price > 0 {
                m.price = to_ticks(m.price);
            }
        }
    }

    Ok(ParsedLobster { rows, tick_raw: tick, unknown_kind, misaligned_prices: misaligned })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub market_state: MarketStateConfig,
    pub tick_raw: Option<i64>,
    pub max_levels: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { market_state: MarketStateConfig::default(), tick_raw: None, max_levels: 1 }
    }
}

/// Midprice (half-tick units) immediately before and after an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidChange {
    pub before: i64,
    pub after: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub tick_raw: i64,
    pub counts: EventCounts,
    pub discarded: BTreeMap<DiscardReason, usize>,
    pub unknown_kind: usize,
    pub misaligned_prices: usize,
    /// Midprice moves between consecutive retained events not explained by
    /// any retained event (e.g. caused by discarded messages).
    pub unattributed_mid_moves: usize,
}

#[derive(Debug, Clone)]
pub struct IngestOutput {
    pub events: Vec<LobEvent>,
    pub mids: Vec<MidChange>,
    pub report: IngestReport,
}

/// Classify an aligned LOBSTER pair into an event stream.
pub fn ingest(parsed: &ParsedLobster, cfg: &IngestConfig) -> Result<IngestOutput> {
    let mut events = Vec::new();
    let mut mids = Vec::new();
    let mut discarded: BTreeMap<DiscardReason, usize> = BTreeMap::new();
    let theta = cfg.market_state.theta;

    for (i, row) in parsed.rows.iter().enumerate() {
        let Some(msg) = row.message else { continue };
        let class = match i.checked_sub(1) {
            None => Classification::Discard(DiscardReason::NoPriorBook),
            Some(p) => classify(&msg, &parsed.rows[p].book, &row.book),
        };
        let etype = match class {
            Classification::Event(t) => t,
            Classification::Discard(r) => {
                *discarded.entry(r).or_default() += 1;
                continue;
            }
        };
        let vb = row.book.best_bid().map_or(0, |l| l.volume) as f64;
        let va = row.book.best_ask().map_or(0, |l| l.volume) as f64;
        let Ok(state) = imbalance_state(vb, va, theta) else {
            *discarded.entry(DiscardReason::OneSidedBook).or_default() += 1;
            continue;
        };
        let before = parsed.rows[i - 1].book.mid_half_ticks().expect("classified rows have a mid");
        let after = row.book.mid_half_ticks().expect("classified rows have a mid");
        events.push(LobEvent {
            seq: i as u64,
            time: msg.time,
            etype,
            price: msg.price,
            size: msg.size,
            market_state: state,
        });
        mids.push(MidChange { before, after });
    }

    let unattributed = mids.windows(2).filter(|w| w[0].after != w[1].before).count();
    let counts = if events.is_empty() { EventCounts::default() } else { count_events(&events)? };
    let report = IngestReport {
        rows: parsed.rows.len(),
        tick_raw: parsed.tick_raw,
        counts,
        discarded,
        unknown_kind: parsed.unknown_kind,
        misaligned_prices: parsed.misaligned_prices,
        unattributed_mid_moves: unattributed,
    };
    Ok(IngestOutput { events, mids, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::EventType;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn sample_row_maps_fields_and_prices() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "m.csv",
            "34200.0100,1,1,5,5858900,1\n34200.0171,1,11885113,21,5859000,1\n",
        );
        let b = write(dir.path(), "b.csv", "5860000,100,5858900,5\n5860000,100,5859000,21\n");
        let parsed = parse_lobster(&m, &b, None, 1).unwrap();
        assert_eq!(parsed.tick_raw, 100);
        let msg = parsed.rows[1].message.unwrap();
        assert_eq!(msg.kind, 1);
        assert_eq!(msg.size, 21);
        assert_eq!(msg.direction, 1);
        // 585.90 in one-cent ticks
        assert_eq!(msg.price, 58590);
        let out = ingest(&parsed, &IngestConfig::default()).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].etype, EventType::LimitBuyUp);
        assert_eq!(out.report.discarded[&DiscardReason::NoPriorBook], 1);
    }

    #[test]
    fn hidden_execution_is_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "m.csv", "34200.0,1,1,5,100,1\n34200.1,5,0,3,200,-1\n34200.2,9,0,3,200,-1\n");
        let b = write(dir.path(), "b.csv", "200,10,100,5\n200,10,100,5\n200,10,100,5\n");
        let parsed = parse_lobster(&m, &b, Some(100), 1).unwrap();
        assert_eq!(parsed.unknown_kind, 1);
        let out = ingest(&parsed, &IngestConfig::default()).unwrap();
        assert!(out.events.is_empty());
        assert_eq!(out.report.discarded[&DiscardReason::HiddenExecution], 1);
        assert_eq!(out.report.unknown_kind, 1);
    }

    #[test]
    fn row_count_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let msgs: String = (0..100).map(|i| format!("{}.0,1,{i},1,100,1\n", 34200 + i)).collect();
        let books: String = (0..99).map(|_| "200,1,100,1\n").collect();
        let m = write(dir.path(), "m.csv", &msgs);
        let b = write(dir.path(), "b.csv", &books);
        let err = parse_lobster(&m, &b, None, 1).unwrap_err();
        assert!(err.to_string().contains("row count mismatch"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "m.csv", "34200.0,1,1,5,100,1\n34200.1,1,x,5,100,1\n");
        let b = write(dir.path(), "b.csv", "200,10,100,5\n200,10,100,5\n");
        let err = parse_lobster(&m, &b, None, 1).unwrap_err();
        match err {
            EventsError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_levels_are_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "m.csv", "34200.0,1,1,5,100,1\n");
        let b = write(dir.path(), "b.csv", "9999999999,0,100,5\n");
        let parsed = parse_lobster(&m, &b, Some(100), 1).unwrap();
        assert!(parsed.rows[0].book.best_ask().is_none());
        assert_eq!(parsed.rows[0].book.mid_half_ticks(), None);
    }

    #[test]
    fn tick_inference_uses_minimum_gap() {
        assert_eq!(infer_tick([5859000, 5859100, 5859300, 5859100]), Some(100));
        assert_eq!(infer_tick([7]), None);
    }
}
