//! Seed plumbing. Every stochastic component draws from a ChaCha stream
//! derived from a 64-bit seed so runs replay bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit avalanche finalizer (SplitMix64 output mix).
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

/// Seed for cross-play cell `(row, col)`.
pub fn pairing_seed(base_seed: u64, row: usize, col: usize) -> u64 {
    mix64(mix64(base_seed ^ row as u64) ^ col as u64)
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream reserved for intent draws. Same key as [`seeded_rng`], different
/// ChaCha stream id, so intent sampling never perturbs the main stream.
pub fn intent_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}
