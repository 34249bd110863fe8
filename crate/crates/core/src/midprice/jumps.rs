use super::{PriceError, Result};
use crate::events::{Direction, LobEvent, MidChange};
use crate::rng::categorical;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Jump sizes (half-ticks, strictly increasing) with their probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpTable {
    sizes: Vec<u32>,
    probs: Vec<f64>,
}

impl JumpTable {
    pub fn new(sizes: Vec<u32>, probs: Vec<f64>) -> Result<Self> {
        if sizes.is_empty() || sizes.len() != probs.len() {
            return Err(PriceError::BadTable("sizes and probabilities must be non-empty and aligned".into()));
        }
        if sizes[0] == 0 || sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PriceError::BadTable("sizes must be positive and strictly increasing".into()));
        }
        if probs.iter().any(|&p| !(p > 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(PriceError::BadTable("probabilities must be positive and sum to 1".into()));
        }
        Ok(Self { sizes, probs })
    }

    /// Normalised histogram of observed sizes.
    pub fn from_counts(counts: &BTreeMap<u32, u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        let kept: Vec<_> = counts.iter().filter(|(_, &c)| c > 0).collect();
        let sizes = kept.iter().map(|(&s, _)| s).collect();
        let mut probs: Vec<f64> = kept.iter().map(|(_, &c)| c as f64 / total as f64).collect();
        // Fold rounding residue into the largest entry so the sum is exact to 1e-12.
        if let Some(i) = (0..probs.len()).max_by(|&a, &b| probs[a].total_cmp(&probs[b])) {
            let s: f64 = probs.iter().sum();
            probs[i] += 1.0 - s;
        }
        Self::new(sizes, probs)
    }

    pub fn unit() -> Self {
        Self { sizes: vec![1], probs: vec![1.0] }
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.sizes.iter().zip(&self.probs).map(|(&s, p)| s as f64 * p).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.sizes.len() == 1 {
            return self.sizes[0];
        }
        self.sizes[categorical(rng, &self.probs)]
    }
}

/// Separate jump tables for upward and downward moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpDistribution {
    pub up: JumpTable,
    pub down: JumpTable,
}

impl JumpDistribution {
    /// Every aggressive event moves the midprice by one half-tick.
    pub fn unit() -> Self {
        Self { up: JumpTable::unit(), down: JumpTable::unit() }
    }

    /// Number of distinct sizes across both directions.
    pub fn distinct_sizes(&self) -> usize {
        let mut all: Vec<u32> = self.up.sizes.iter().chain(&self.down.sizes).copied().collect();
        all.sort_unstable();
        all.dedup();
        all.len()
    }

    pub fn table(&self, d: Direction) -> Option<&JumpTable> {
        match d {
            Direction::Up => Some(&self.up),
            Direction::Down => Some(&self.down),
            Direction::None => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(s).map_err(|e| PriceError::BadTable(e.to_string()))?;
        JumpTable::new(d.up.sizes.clone(), d.up.probs.clone())?;
        JumpTable::new(d.down.sizes.clone(), d.down.probs.clone())?;
        Ok(d)
    }
}

/// Empirical jump tables from the midprice move at each aggressive event.
pub fn fit_jumps(events: &[LobEvent], mids: &[MidChange]) -> Result<JumpDistribution> {
    if events.len() != mids.len() {
        return Err(PriceError::Misaligned { events: events.len(), mids: mids.len() });
    }
    let mut up = BTreeMap::new();
    let mut down = BTreeMap::new();
    for (index, (e, m)) in events.iter().zip(mids).enumerate() {
        let moved = m.after - m.before;
        let (table, size) = match e.etype.direction() {
            Direction::Up => (&mut up, moved),
            Direction::Down => (&mut down, -moved),
            Direction::None => continue,
        };
        let size = u32::try_from(size).ok().filter(|&s| s > 0).ok_or(PriceError::BadJump { index, moved })?;
        *table.entry(size).or_insert(0u64) += 1;
    }
    if up.is_empty() {
        return Err(PriceError::NoAggressive("upward"));
    }
    if down.is_empty() {
        return Err(PriceError::NoAggressive("downward"));
    }
    Ok(JumpDistribution { up: JumpTable::from_counts(&up)?, down: JumpTable::from_counts(&down)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_normalise() {
        let c: BTreeMap<u32, u64> = [(1, 900), (2, 90), (3, 10)].into_iter().collect();
        let t = JumpTable::from_counts(&c).unwrap();
        assert_eq!(t.sizes(), &[1, 2, 3]);
        for (p, e) in t.probs().iter().zip([0.9, 0.09, 0.01]) {
            assert!((p - e).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_tables_are_rejected() {
        assert!(JumpTable::new(vec![2, 1], vec![0.5, 0.5]).is_err());
        assert!(JumpTable::new(vec![0], vec![1.0]).is_err());
        assert!(JumpTable::new(vec![1, 2], vec![0.5, 0.4]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let d = JumpDistribution {
            up: JumpTable::new(vec![1, 3], vec![0.75, 0.25]).unwrap(),
            down: JumpTable::unit(),
        };
        assert_eq!(JumpDistribution::from_json(&d.to_json()).unwrap(), d);
        assert_eq!(d.distinct_sizes(), 2);
    }
}
