//! Pinned, portable randomness.
//!
//! Reproducibility across platforms and library versions is a hard
//! requirement (retrain-oracle equivalence is asserted bit-exactly), so this
//! module fixes every random primitive explicitly:
//!
//! * seeds expand to ChaCha8 key material through SplitMix64,
//! * shuffles are hand-rolled Fisher-Yates over `next_u64`,
//! * uniform floats take the top 53 bits of `next_u64`.
//!
//! Index draws reduce `next_u64` modulo the range. The modulo bias is at most
//! range/2^64 (< 2^-40 for every range used here), far below anything the
//! statistical tests can resolve.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// SplitMix64 step (Steele, Lea & Flood's published constants).
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent sub-seed from a base seed and a salt.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut state = base ^ salt.wrapping_mul(0xA076_1D64_78BD_642F);
    splitmix64(&mut state)
}

/// ChaCha8 generator keyed by SplitMix64-expanded seed material.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform f64 in [0, 1) from the top 53 bits of one u64 draw.
pub fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform index in [0, bound). `bound` must be nonzero.
pub fn uniform_index(rng: &mut ChaCha8Rng, bound: usize) -> usize {
    debug_assert!(bound > 0);
    (rng.next_u64() % bound as u64) as usize
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut ChaCha8Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}

/// Sample `count` distinct items from `pool` uniformly without replacement,
/// by partial Fisher-Yates. Order of the sample is the draw order.
pub fn sample_without_replacement<T: Copy>(
    rng: &mut ChaCha8Rng,
    pool: &[T],
    count: usize,
) -> Vec<T> {
    debug_assert!(count <= pool.len());
    let mut scratch: Vec<T> = pool.to_vec();
    for i in 0..count {
        let j = i + uniform_index(rng, scratch.len() - i);
        scratch.swap(i, j);
    }
    scratch.truncate(count);
    scratch
}
