use super::sac::OBS_DIM;
use super::{MmError, Result};
use crate::rng::SimRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: [f64; OBS_DIM],
    pub mask: [bool; 3],
    pub action: usize,
    pub reward: f64,
    pub next_obs: [f64; OBS_DIM],
    pub next_mask: [bool; 3],
    pub done: bool,
}

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: Vec::new(), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// `n` indices drawn uniformly with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
        if self.items.len() < n || self.items.is_empty() {
            return Err(MmError::ReplayTooSmall { have: self.items.len(), need: n });
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample(&self, n: usize, rng: &mut SimRng) -> Result<Vec<Transition>> {
        Ok(self.sample_indices(n, rng)?.into_iter().map(|i| self.items[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn t(r: f64) -> Transition {
        Transition { obs: [0.0; OBS_DIM], mask: [true; 3], action: 0, reward: r, next_obs: [0.0; OBS_DIM], next_mask: [true; 3], done: false }
    }

    #[test]
    fn ring_overwrites_the_oldest() {
        let mut b = ReplayBuffer::new(3);
        for k in 0..5 {
            b.push(t(k as f64));
        }
        let rs: Vec<f64> = (0..3).map(|i| b.get(i).unwrap().reward).collect();
        assert_eq!(rs, [3.0, 4.0, 2.0]);
    }

    #[test]
    fn too_small_for_the_batch() {
        let b = ReplayBuffer::new(10);
        assert!(matches!(b.sample(1, &mut seeded(0)), Err(MmError::ReplayTooSmall { have: 0, need: 1 })));
    }
}
