//! Seeded RNG streams.
//!
//! Every stochastic component (scene curvature, distractors, per-frame
//! texture, weight init, window sampling, dropout masks, particle draws)
//! pulls from its own ChaCha stream derived from a user seed and a purpose
//! tag. Streams are independent and stable across runs, which is what makes
//! byte-identical re-runs possible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SeededRng = ChaCha12Rng;

/// splitmix64 finalizer; good avalanche for cheap seed derivation.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream from `(seed, tag, index)`.
pub fn stream(seed: u64, tag: u64, index: u64) -> SeededRng {
    let derived = mix(mix(seed ^ mix(tag)) ^ index);
    SeededRng::seed_from_u64(derived)
}

/// Standard normal sample via Box-Muller.
pub fn normal(rng: &mut SeededRng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
