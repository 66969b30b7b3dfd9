//! Deterministic randomness.
//!
//! Every random draw that must be reproducible across machines comes from a
//! ChaCha20 keystream (20 rounds, zero nonce, block counter starting at 0).
//! The helpers below fix how keystream words become floats, Gaussians and
//! bounded integers.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

pub use rand_chacha::ChaCha20Rng as StreamRng;

/// ChaCha20 keystream keyed directly by 32 bytes.
pub fn keyed_stream(key: &[u8; 32]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(*key)
}

/// ChaCha20 keystream keyed by a 64-bit seed (expanded by `SeedableRng::seed_from_u64`).
pub fn seeded_stream(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Deterministic child seed for item `index` of a run seeded with `seed`.
pub fn child_seed(seed: u64, tag: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a mixed input
    let mut z = seed
        ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps a 64-bit word to the open interval (0, 1) using its top 52 bits.
#[inline]
pub fn unit_open(word: u64) -> f64 {
    ((word >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Uniform draw in [0, bound) by modulo reduction of a 64-bit word.
///
/// The bias is at most `bound / 2^64`, negligible for the sizes used here.
#[inline]
pub fn below<R: RngCore + ?Sized>(rng: &mut R, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    rng.next_u64() % bound
}

/// Box–Muller standard normal sampler consuming both outputs of every pair.
#[derive(Debug, Default, Clone)]
pub struct Gaussian {
    spare: Option<f64>,
}

impl Gaussian {
    pub fn new() -> Self {
        Self { spare: None }
    }

    pub fn sample<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = unit_open(rng.next_u64());
        let u2 = unit_open(rng.next_u64());
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(angle));
        r * libm::cos(angle)
    }
}

/// In-place Fisher–Yates shuffle (i from the end down to 1, j uniform in [0, i]).
pub fn shuffle<T, R: RngCore + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}
