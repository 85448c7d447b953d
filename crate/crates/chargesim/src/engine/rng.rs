//! Deterministic, splittable random streams.
//!
//! Every stochastic routine draws raw 64-bit words from a ChaCha8 stream
//! seeded through `derive_seed`, and converts them to floats here. Results
//! therefore depend only on the cipher stream and this file, never on
//! distribution internals of external crates, and every (run, repetition)
//! pair can be simulated on any worker without coordination.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_NEG53: f64 = 1.0 / 9_007_199_254_740_992.0;

/// SplitMix64 output function: a single avalanche step of the given state.
#[must_use]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed split: the seed of repetition `rep` of run `run` is a
/// pure function of the master seed, so parallel and serial execution orders
/// produce identical streams.
#[must_use]
pub fn derive_seed(master: u64, run: u64, rep: u64) -> u64 {
    let a = splitmix64(master ^ 0x243F_6A88_85A3_08D3);
    let b = splitmix64(a ^ run.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    splitmix64(b ^ rep.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

#[must_use]
pub fn trajectory_rng(master: u64, run: u64, rep: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, run, rep))
}

/// Uniform on [0, 1) with 53-bit resolution.
#[must_use]
pub fn uniform01<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * TWO_NEG53
}

/// Uniform on (0, 1]: never zero, so its logarithm is always finite.
#[must_use]
pub fn uniform_open01<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * TWO_NEG53
}

/// Exponential waiting time for a process at `rate_hz`, in nanoseconds.
#[must_use]
pub fn exp_wait_ns<R: RngCore>(rng: &mut R, rate_hz: f64) -> f64 {
    debug_assert!(rate_hz > 0.0);
    -uniform_open01(rng).ln() * 1.0e9 / rate_hz
}
