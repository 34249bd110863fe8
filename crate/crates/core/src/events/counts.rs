use super::{EventType, EventsError, LobEvent, Result};
use serde::{Deserialize, Serialize};

/// Per-type event counts in canonical type order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub counts: [u64; EventType::COUNT],
}

impl EventCounts {
    pub fn from_types<I: IntoIterator<Item = EventType>>(types: I) -> Self {
        let mut c = Self::default();
        for t in types {
            c.counts[t.index()] += 1;
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn get(&self, t: EventType) -> u64 {
        self.counts[t.index()]
    }

    /// Share of each type among all events; all zeros for an empty count.
    pub fn probabilities(&self) -> [f64; EventType::COUNT] {
        let total = self.total();
        let mut p = [0.0; EventType::COUNT];
        if total > 0 {
            for (pi, &c) in p.iter_mut().zip(&self.counts) {
                *pi = c as f64 / total as f64;
            }
        }
        p
    }

    pub fn merge(&mut self, other: &EventCounts) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn aggressive(&self) -> u64 {
        EventType::ALL.iter().filter(|t| t.is_aggressive()).map(|t| self.get(*t)).sum()
    }
}

/// Count a non-empty stream by type.
pub fn count_events(stream: &[LobEvent]) -> Result<EventCounts> {
    if stream.is_empty() {
        return Err(EventsError::EmptyStream);
    }
    Ok(EventCounts::from_types(stream.iter().map(|e| e.etype)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::MarketState;

    #[test]
    fn single_event_has_probability_one() {
        let e = LobEvent {
            seq: 0,
            time: 34200.0,
            etype: EventType::LimitBuyUp,
            price: 1,
            size: 1,
            market_state: MarketState::BALANCED,
        };
        let c = count_events(&[e]).unwrap();
        let p = c.probabilities();
        assert_eq!(p[0], 1.0);
        assert!(p[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(matches!(count_events(&[]), Err(EventsError::EmptyStream)));
    }
}
