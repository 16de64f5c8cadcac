//! Deterministic random streams.
//!
//! Every random quantity in the crate is drawn from ChaCha8 seeded with a
//! 64-bit value. Ensemble members derive their seed from a base seed and the
//! realization index with [`realization_seed`]:
//!
//! ```text
//! seed(base, k) = splitmix64(base + k * 0x9E3779B97F4A7C15)   (wrapping)
//! ```
//!
//! so any realization can be regenerated in isolation, in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of realization `index` in an ensemble rooted at `base`.
pub fn realization_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)))
}

pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform double in [0, 1) built from the top 53 bits of one 64-bit draw.
pub fn unit_f64<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform double in [-w, w).
pub fn symmetric_f64<R: Rng + ?Sized>(rng: &mut R, w: f64) -> f64 {
    w * (2.0 * unit_f64(rng) - 1.0)
}

/// Random vector with independent ±1 entries.
pub fn rademacher<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut bits = 0u64;
    for i in 0..len {
        if i % 64 == 0 {
            bits = rng.next_u64();
        }
        out.push(if bits & 1 == 1 { 1.0 } else { -1.0 });
        bits >>= 1;
    }
    out
}
