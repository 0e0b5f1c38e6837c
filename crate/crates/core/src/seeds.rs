//! Deterministic seed derivation for reproducible, schedule-independent runs.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Folds a master seed with a list of tags into a child seed.
///
/// Used for per-trial seeds (`[cell, trial]`) and per-point noise streams so
/// that parallel schedules cannot change results.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0x5851f42d4c957f2d);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    state
}

pub fn rng_from(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
