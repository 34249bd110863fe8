use super::{BookSnapshot, Category, Direction, EventType, EventsError, MarketState, RawMessage, Result, Side};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketStateConfig {
    pub theta: f64,
}

impl Default for MarketStateConfig {
    fn default() -> Self {
        Self { theta: 0.4 }
    }
}

impl MarketStateConfig {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(EventsError::Config(format!("theta must lie in (0,1), got {theta}")));
        }
        Ok(Self { theta })
    }
}

/// Volume-imbalance regime from best-level volumes.
///
/// `I = (vb - va) / (vb + va)`; state 0 if `I < -theta`, 2 if `I > theta`,
/// otherwise 1.
pub fn market_state(snapshot: &BookSnapshot, cfg: MarketStateConfig) -> Result<MarketState> {
    let vb = snapshot.best_bid().map_or(0, |l| l.volume) as f64;
    let va = snapshot.best_ask().map_or(0, |l| l.volume) as f64;
    imbalance_state(vb, va, cfg.theta)
}

pub(crate) fn imbalance_state(vb: f64, va: f64, theta: f64) -> Result<MarketState> {
    let total = vb + va;
    if total <= 0.0 {
        return Err(EventsError::EmptyBook);
    }
    let imbalance = (vb - va) / total;
    let v = if imbalance < -theta {
        0
    } else if imbalance > theta {
        2
    } else {
        1
    };
    Ok(MarketState(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    HiddenExecution,
    CrossTrade,
    TradingHalt,
    /// Message category/side/move combination with no event type.
    UndefinedCombination,
    /// Best bid or ask missing before or after the message.
    OneSidedBook,
    /// First message of the file: no prior book to compare against.
    NoPriorBook,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Event(EventType),
    Discard(DiscardReason),
}

/// Classify one message given the book before and after it.
///
/// LOBSTER direction semantics: for new orders and cancellations it is the
/// side of the order itself; for executions it is the side of the resting
/// order, so a sell-side execution (`-1`) is a market buy.
pub fn classify(message: &RawMessage, before: &BookSnapshot, after: &BookSnapshot) -> Classification {
    let category = match message.kind {
        1 => Category::Limit,
        2 | 3 => Category::Cancel,
        4 => Category::Market,
        5 => return Classification::Discard(DiscardReason::HiddenExecution),
        6 => return Classification::Discard(DiscardReason::CrossTrade),
        _ => return Classification::Discard(DiscardReason::TradingHalt),
    };
    let side = match (category, message.direction >= 0) {
        (Category::Market, true) => Side::Sell,
        (Category::Market, false) => Side::Buy,
        (_, true) => Side::Buy,
        (_, false) => Side::Sell,
    };
    let (Some(m0), Some(m1)) = (before.mid_half_ticks(), after.mid_half_ticks()) else {
        return Classification::Discard(DiscardReason::OneSidedBook);
    };
    let direction = match m1.cmp(&m0) {
        std::cmp::Ordering::Greater => Direction::Up,
        std::cmp::Ordering::Less => Direction::Down,
        std::cmp::Ordering::Equal => Direction::None,
    };
    match EventType::from_parts(category, side, direction) {
        Some(t) => Classification::Event(t),
        None => Classification::Discard(DiscardReason::UndefinedCombination),
    }
}
