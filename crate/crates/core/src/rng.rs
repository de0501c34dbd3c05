//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! user seed and a named stream. ChaCha is counter based, so two streams with
//! the same key never overlap and results are identical across platforms.
//! Gaussian variates are produced by pushing an open-interval uniform through
//! the inverse standard normal CDF, which keeps them bit-stable.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::normal::inverse_cdf_open;

pub type Rng = ChaCha8Rng;

/// Builds the generator for `(seed, label)`. The label is hashed to a stream id.
pub fn stream(seed: u64, label: &str) -> Rng {
    stream_with_id(seed, stream_id(label))
}

pub fn stream_with_id(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// FNV-1a, 64 bit.
pub fn stream_id(label: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Independent 64-bit seed for a named sub-task of an experiment seeded with
/// `seed`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    stream(seed, label).next_u64()
}

/// Uniform on the open interval (0, 1), never returning either endpoint.
pub fn uniform_open(rng: &mut Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..n`.
pub fn index(rng: &mut Rng, n: usize) -> usize {
    debug_assert!(n > 0);
    ((uniform_open(rng) * n as f64) as usize).min(n - 1)
}

pub fn std_normal(rng: &mut Rng) -> f64 {
    inverse_cdf_open(uniform_open(rng))
}

pub fn fill_std_normal(rng: &mut Rng, out: &mut [f64]) {
    for v in out {
        *v = std_normal(rng);
    }
}
