//! LOB event taxonomy, LOBSTER ingestion and classification.

mod classify;
mod counts;
mod io;
mod lobster;

pub use classify::{classify, market_state, Classification, DiscardReason, MarketStateConfig};
pub use counts::{count_events, EventCounts};
pub use io::{read_event_stream, write_event_stream, StreamLayout};
pub use lobster::{
    infer_tick, ingest, parse_lobster, BookLevel, BookSnapshot, IngestConfig, IngestOutput,
    IngestReport, MidChange, ParsedLobster, RawMessage,
};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EventsError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: malformed row: {reason}")]
    Malformed { file: String, line: usize, reason: String },
    #[error("row count mismatch: {messages} message rows vs {books} orderbook rows")]
    RowCountMismatch { messages: usize, books: usize },
    #[error("empty book: best bid and ask volumes are both zero")]
    EmptyBook,
    #[error("empty event stream")]
    EmptyStream,
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, EventsError>;

/// Effect of an event on the midprice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Limit,
    Market,
    Cancel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

/// The twelve LOB event types, in canonical order (type codes 1..=12).
///
/// `+`/`-` types move the midprice up/down ("aggressive"), `0` types leave it
/// unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    LimitBuyUp,
    LimitSellDown,
    MarketBuyUp,
    MarketSellDown,
    BuyCancelDown,
    SellCancelUp,
    LimitBuyFlat,
    LimitSellFlat,
    MarketBuyFlat,
    MarketSellFlat,
    BuyCancelFlat,
    SellCancelFlat,
}

impl EventType {
    pub const COUNT: usize = 12;

    pub const ALL: [EventType; 12] = [
        EventType::LimitBuyUp,
        EventType::LimitSellDown,
        EventType::MarketBuyUp,
        EventType::MarketSellDown,
        EventType::BuyCancelDown,
        EventType::SellCancelUp,
        EventType::LimitBuyFlat,
        EventType::LimitSellFlat,
        EventType::MarketBuyFlat,
        EventType::MarketSellFlat,
        EventType::BuyCancelFlat,
        EventType::SellCancelFlat,
    ];

    /// Zero-based index into [`EventType::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// One-based type code used in on-disk streams.
    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        code.checked_sub(1).and_then(|i| Self::from_index(i as usize))
    }

    pub fn label(self) -> &'static str {
        match self {
            EventType::LimitBuyUp => "LB+",
            EventType::LimitSellDown => "LS-",
            EventType::MarketBuyUp => "MB+",
            EventType::MarketSellDown => "MS-",
            EventType::BuyCancelDown => "BC-",
            EventType::SellCancelUp => "SC+",
            EventType::LimitBuyFlat => "LB0",
            EventType::LimitSellFlat => "LS0",
            EventType::MarketBuyFlat => "MB0",
            EventType::MarketSellFlat => "MS0",
            EventType::BuyCancelFlat => "BC0",
            EventType::SellCancelFlat => "SC0",
        }
    }

    pub fn direction(self) -> Direction {
        use EventType::*;
        match self {
            LimitBuyUp | MarketBuyUp | SellCancelUp => Direction::Up,
            LimitSellDown | MarketSellDown | BuyCancelDown => Direction::Down,
            _ => Direction::None,
        }
    }

    pub fn category(self) -> Category {
        use EventType::*;
        match self {
            LimitBuyUp | LimitSellDown | LimitBuyFlat | LimitSellFlat => Category::Limit,
            MarketBuyUp | MarketSellDown | MarketBuyFlat | MarketSellFlat => Category::Market,
            _ => Category::Cancel,
        }
    }

    /// Side of the order that generated the event (the aggressor for market orders).
    pub fn side(self) -> Side {
        use EventType::*;
        match self {
            LimitBuyUp | MarketBuyUp | BuyCancelDown | LimitBuyFlat | MarketBuyFlat
            | BuyCancelFlat => Side::Buy,
            _ => Side::Sell,
        }
    }

    pub fn is_aggressive(self) -> bool {
        self.direction() != Direction::None
    }

    /// The unique type for a (category, side, midprice move) combination, if any.
    pub fn from_parts(category: Category, side: Side, direction: Direction) -> Option<Self> {
        use EventType::*;
        let t = match (category, side, direction) {
            (Category::Limit, Side::Buy, Direction::Up) => LimitBuyUp,
            (Category::Limit, Side::Buy, Direction::None) => LimitBuyFlat,
            (Category::Limit, Side::Sell, Direction::Down) => LimitSellDown,
            (Category::Limit, Side::Sell, Direction::None) => LimitSellFlat,
            (Category::Market, Side::Buy, Direction::Up) => MarketBuyUp,
            (Category::Market, Side::Buy, Direction::None) => MarketBuyFlat,
            (Category::Market, Side::Sell, Direction::Down) => MarketSellDown,
            (Category::Market, Side::Sell, Direction::None) => MarketSellFlat,
            (Category::Cancel, Side::Buy, Direction::Down) => BuyCancelDown,
            (Category::Cancel, Side::Buy, Direction::None) => BuyCancelFlat,
            (Category::Cancel, Side::Sell, Direction::Up) => SellCancelUp,
            (Category::Cancel, Side::Sell, Direction::None) => SellCancelFlat,
            _ => return None,
        };
        Some(t)
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Volume-imbalance regime at an event: 0 = sell pressure, 1 = balanced,
/// 2 = buy pressure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MarketState(u8);

impl MarketState {
    pub const COUNT: usize = 3;
    pub const BALANCED: MarketState = MarketState(1);

    pub fn new(v: u8) -> Option<Self> {
        (v < 3).then_some(MarketState(v))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One classified LOB event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LobEvent {
    pub seq: u64,
    /// Seconds after midnight.
    pub time: f64,
    pub etype: EventType,
    /// Order price in integer ticks.
    pub price: i64,
    pub size: u64,
    pub market_state: MarketState,
}

/// Checks the ordering invariant: non-decreasing time, strictly increasing seq.
pub fn check_ordering(events: &[LobEvent]) -> bool {
    events
        .windows(2)
        .all(|w| w[1].time >= w[0].time && w[1].seq > w[0].seq)
}
