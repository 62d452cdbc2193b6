//! Seeded randomness shared by every stochastic step.
//!
//! All sampling runs on xoshiro256++ (a 64-bit shift-register generator) seeded
//! through SplitMix64, so a given seed produces the same stream on every
//! platform. Index draws go through `u64` ranges to stay independent of the
//! target's pointer width.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Prng = Xoshiro256PlusPlus;

/// Generator for a plain seed.
pub fn seeded(seed: u64) -> Prng {
    Prng::seed_from_u64(seed)
}

/// Generator for an independent sub-stream, e.g. one per boosting round or
/// one per OD pair. The same `(seed, stream)` always yields the same stream.
pub fn stream(seed: u64, stream: &[u64]) -> Prng {
    let mut state = splitmix64(seed);
    for &s in stream {
        state = splitmix64(state ^ splitmix64(s.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    Prng::seed_from_u64(state)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut Prng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i as u64) as usize;
        items.swap(i, j);
    }
}

/// `k` distinct indices from `0..n`, returned in ascending order.
pub fn sample_indices(rng: &mut Prng, n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    // partial Fisher-Yates: the first k slots end up a uniform k-subset
    for i in 0..k {
        let j = rng.random_range(i as u64..n as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}
