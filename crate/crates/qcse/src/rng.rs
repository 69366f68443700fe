//! Seeded, portable randomness used everywhere in the toolkit.
//!
//! Every random quantity in the pipeline is derived from a single master
//! seed so that a whole experiment is reproducible from one number. The
//! algorithms are pinned here rather than delegated to library defaults,
//! so that another implementation of the same pipeline can reproduce the
//! exact streams:
//!
//! * stream generator: ChaCha20 (via `rand_chacha`), seeded with a 64-bit
//!   value in the low 8 bytes of the 32-byte key, remaining bytes zero
//!   (`ChaCha20Rng::seed_from_u64`);
//! * purpose derivation: [`derive_seed`] mixes the master seed with the
//!   FNV-1a hash of a purpose string through the SplitMix64 finalizer;
//! * uniform doubles: [`next_f64`] takes the top 53 bits of a `u64` draw;
//! * Gaussians: [`next_gaussian`] is the Box-Muller transform, one pair
//!   per two uniform draws, cached;
//! * shuffles: [`shuffle`] is a Fisher-Yates walk using [`next_below`].

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Deterministic RNG with the helpers the pipeline needs.
pub struct SeededRng {
    inner: ChaCha20Rng,
    spare_gaussian: Option<f64>,
}

impl SeededRng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
            spare_gaussian: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`: the top 53 bits of a `u64` draw scaled by 2^-53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller on two uniform draws.
    ///
    /// `u1` is mapped into `(0, 1]` so the logarithm is always finite.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Unbiased integer in `[0, n)` by rejection on the top of the range.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n + 1) % n;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % n;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// SplitMix64 finalizer; the standard 64-bit avalanche mix.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// FNV-1a over the purpose string's bytes.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derive a purpose-specific seed from the master seed.
///
/// `derive_seed(master, purpose) = splitmix64(master ^ fnv1a(purpose))`.
/// Purpose strings are stable identifiers like `"corpus:pair:train:17"`
/// or `"model:init"`, listed where each call site constructs them.
pub fn derive_seed(master: u64, purpose: &str) -> u64 {
    splitmix64(master ^ fnv1a(purpose.as_bytes()))
}
