//! Counter-based random streams.
//!
//! A replication's stream is ChaCha20 keyed by its 64-bit seed (little-endian
//! in the first 8 key bytes, remaining key bytes zero, stream 0, counter
//! starting at 0). Uniforms are `(⌊u64 / 2^11⌋ + 1/2) · 2^-53`, which never
//! hit 0 or 1. Normals and Betas are inverse-CDF transforms of those
//! uniforms, so a stream can be reproduced from the seed alone.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::dist::{beta_quantile, normal_quantile};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `index` under `master`: the SplitMix64 output at
/// position `index + 1` of the sequence started at `master`. The finalizer
/// is a bijection, so distinct indices give distinct seeds.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub struct CounterRng {
    inner: ChaCha20Rng,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        CounterRng {
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        let u = self.uniform();
        mean + sd * normal_quantile(u).expect("uniform lies in (0, 1)")
    }

    pub fn beta(&mut self, a: f64, b: f64) -> f64 {
        let u = self.uniform();
        beta_quantile(a, b, u)
    }
}
