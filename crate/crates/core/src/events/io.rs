//! Canonical event-stream CSV.
//!
//! Full layout: `seq,time,type,price,size,state`; the simulated layout drops
//! the price and size columns: `seq,time,type,state`. Type codes are 1..=12
//! in canonical order.

use super::{EventType, EventsError, LobEvent, MarketState, Result};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamLayout {
    Full,
    TypesOnly,
}

const FULL_HEADER: &str = "seq,time,type,price,size,state";
const TYPES_HEADER: &str = "seq,time,type,state";

pub fn format_event_stream(events: &[LobEvent], layout: StreamLayout) -> String {
    let mut out = String::with_capacity(events.len() * 40);
    match layout {
        StreamLayout::Full => {
            out.push_str(FULL_HEADER);
            out.push('\n');
            for e in events {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    e.seq,
                    e.time,
                    e.etype.code(),
                    e.price,
                    e.size,
                    e.market_state.value()
                );
            }
        }
        StreamLayout::TypesOnly => {
            out.push_str(TYPES_HEADER);
            out.push('\n');
            for e in events {
                let _ = writeln!(out, "{},{},{},{}", e.seq, e.time, e.etype.code(), e.market_state.value());
            }
        }
    }
    out
}

pub fn write_event_stream(path: &Path, events: &[LobEvent], layout: StreamLayout) -> Result<()> {
    fs::write(path, format_event_stream(events, layout))
        .map_err(|source| EventsError::Io { path: path.display().to_string(), source })
}

/// Parse either layout; the header selects which. Price and size default to 0
/// for the types-only layout.
pub fn parse_event_stream(text: &str, file: &str) -> Result<(Vec<LobEvent>, StreamLayout)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let layout = match lines.next() {
        Some((_, h)) if h.trim() == FULL_HEADER => StreamLayout::Full,
        Some((_, h)) if h.trim() == TYPES_HEADER => StreamLayout::TypesOnly,
        Some((i, h)) => {
            return Err(EventsError::Malformed {
                file: file.into(),
                line: i + 1,
                reason: format!("unrecognised header {h:?}"),
            })
        }
        None => return Ok((Vec::new(), StreamLayout::Full)),
    };
    let bad = |line: usize, reason: String| EventsError::Malformed { file: file.into(), line, reason };
    let mut events = Vec::new();
    for (i, line) in lines {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let want = if layout == StreamLayout::Full { 6 } else { 4 };
        if cols.len() != want {
            return Err(bad(i + 1, format!("expected {want} columns, got {}", cols.len())));
        }
        let seq = cols[0].parse().map_err(|_| bad(i + 1, "bad seq".into()))?;
        let time: f64 = cols[1].parse().map_err(|_| bad(i + 1, "bad time".into()))?;
        let code: u8 = cols[2].parse().map_err(|_| bad(i + 1, "bad type".into()))?;
        let etype = EventType::from_code(code).ok_or_else(|| bad(i + 1, format!("type code {code} out of range")))?;
        let state_col = if layout == StreamLayout::Full { 5 } else { 3 };
        let state: u8 = cols[state_col].parse().map_err(|_| bad(i + 1, "bad state".into()))?;
        let market_state = MarketState::new(state).ok_or_else(|| bad(i + 1, format!("state {state} out of range")))?;
        let (price, size) = if layout == StreamLayout::Full {
            (
                cols[3].parse().map_err(|_| bad(i + 1, "bad price".into()))?,
                cols[4].parse().map_err(|_| bad(i + 1, "bad size".into()))?,
            )
        } else {
            (0, 0)
        };
        events.push(LobEvent { seq, time, etype, price, size, market_state });
    }
    Ok((events, layout))
}

pub fn read_event_stream(path: &Path) -> Result<(Vec<LobEvent>, StreamLayout)> {
    let text = fs::read_to_string(path)
        .map_err(|source| EventsError::Io { path: path.display().to_string(), source })?;
    parse_event_stream(&text, &path.display().to_string())
}
