//! Seedable generator shared by every randomized component.
//!
//! The stream is xoshiro256++ seeded through SplitMix64 (`seed_from_u64`).
//! Floats and bounded integers are derived from raw 64-bit outputs with the
//! fixed formulas below so that other implementations can replay an ensemble
//! bit-for-bit.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

/// Identifier stamped into every output record.
pub const RNG_ALGORITHM: &str = "xoshiro256++/splitmix64-seed";

pub type SimRng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> SimRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Uniform on `[0, 1)`: the top 53 bits of one output.
#[inline]
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..n` by 128-bit multiply-shift (no rejection step).
#[inline]
pub fn below(rng: &mut impl RngCore, n: u64) -> u64 {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as u64
}

#[inline]
pub fn coin(rng: &mut impl RngCore) -> bool {
    rng.next_u64() >> 63 == 1
}

/// Per-item seed derived from a base seed, independent of evaluation order.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut mix = SplitMix64::seed_from_u64(base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    mix.next_u64()
}
