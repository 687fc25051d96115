//! Random streams and seed derivation.
//!
//! Every trajectory owns a private Xoshiro256++ stream seeded with
//! `mix64(master_seed ^ trajectory_index)`. `mix64` is the SplitMix64
//! finaliser:
//!
//! ```text
//! z = (x + 0x9E3779B97F4A7C15)
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z ^ (z >> 31)
//! ```
//!
//! It is a bijection on `u64`, so distinct indices always yield distinct
//! stream seeds. The 64-bit stream seed is expanded into the generator state
//! by `SeedableRng::seed_from_u64`.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generator used for every stream.
pub type StreamRng = Xoshiro256PlusPlus;

/// Name recorded in run metadata.
pub const GENERATOR_NAME: &str = "xoshiro256++ (rand_xoshiro 0.7, seed_from_u64) with mix64 stream seeds";

pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream owned by trajectory `index`.
pub fn stream_seed(master_seed: u64, index: u64) -> u64 {
    mix64(master_seed ^ index)
}

/// Stream seeds for trajectories `0..n_traj`, independent of scheduling.
pub fn derive_worker_streams(master_seed: u64, n_traj: u64) -> Vec<u64> {
    (0..n_traj).map(|i| stream_seed(master_seed, i)).collect()
}

pub fn stream(master_seed: u64, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(master_seed, index))
}

/// Uniform draw from `0..n` without modulo bias (Lemire's multiply-shift
/// with rejection). `n` must be nonzero.
#[inline]
pub fn bounded<R: RngCore + ?Sized>(rng: &mut R, n: u64) -> u64 {
    debug_assert!(n > 0);
    let mut m = (rng.next_u64() as u128) * (n as u128);
    if (m as u64) < n {
        let threshold = n.wrapping_neg() % n;
        while (m as u64) < threshold {
            m = (rng.next_u64() as u128) * (n as u128);
        }
    }
    (m >> 64) as u64
}

/// Uniform double in `[0, 1)` with 53 random bits.
#[inline]
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform double in `(0, 1)`.
#[inline]
pub fn open_unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
