//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`Stream`], a thin wrapper around
//! the SplitMix64 generator: the state advances by the constant
//! `0x9E3779B97F4A7C15` and each output is the SplitMix64 finalizer applied to
//! the new state. Derived quantities are defined exactly, and ports to
//! other languages that follow these definitions reproduce the same streams:
//!
//! * uniform `[0, 1)`: `(next_u64 >> 11) * 2^-53`
//! * uniform `(0, 1]`: `1 - uniform`
//! * standard normal: Box–Muller on `u1 = uniform (0, 1]`, `u2 = uniform [0, 1)`,
//!   yielding `r cos(2πu2)` and then, on the next call, `r sin(2πu2)` with
//!   `r = sqrt(-2 ln u1)`.

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 output finalizer. Maps 0 to 0.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `index` from a parent seed.
///
/// Index 0 maps to the parent seed itself, so a computation split into a single
/// piece consumes exactly the same stream as the unsplit computation.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ mix64(index.wrapping_mul(GOLDEN_GAMMA))
}

/// A deterministic random stream.
#[derive(Debug, Clone)]
pub struct Stream {
    inner: SplitMix64,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self { inner: SplitMix64::seed_from_u64(seed), spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw on `(0, 1]`.
    pub fn uniform_open_closed(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Standard normal draw via Box–Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open_closed();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Vector of `len` independent standard normal draws.
    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.normal()).collect()
    }

    /// Uniform integer in `[0, bound)`.
    pub fn below(&mut self, bound: usize) -> usize {
        self.inner.random_range(0..bound)
    }

    /// Fair coin.
    pub fn coin(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }

    /// `amount` distinct indices from `[0, length)`, sorted ascending.
    pub fn sample_indices(&mut self, length: usize, amount: usize) -> Vec<usize> {
        let mut picked = index::sample(&mut self.inner, length, amount).into_vec();
        picked.sort_unstable();
        picked
    }
}
