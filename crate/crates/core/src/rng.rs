//! Seeded, splittable random streams.
//!
//! Every stochastic operation takes an explicit seed. Independent sub-streams
//! (one per Monte-Carlo run, per batch element, ...) are derived with
//! [`split`], which selects a distinct ChaCha stream for the same key, so
//! results never depend on scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn split(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.wrapping_add(1));
    rng
}

/// Mix two words into a fresh seed (splitmix64 finaliser).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw on the open interval (0, 1); safe to pass to `ln`.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Waiting time of an exponential clock with rate `rate` from uniform `u`.
pub fn exp_waiting_time(u: f64, rate: f64) -> f64 {
    -u.ln() / rate
}

/// Index drawn with probability proportional to `weights`.
///
/// `weights` must be non-negative with a positive sum.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if target < w {
            return i;
        }
        target -= w;
    }
    // Rounding can leave `target` marginally above the last bucket.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
