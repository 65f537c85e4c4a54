//! Deterministic randomness.
//!
//! Every source of randomness in the crate flows through [`Rng`], a thin
//! wrapper over ChaCha8. ChaCha is a counter-based stream cipher, so a
//! `(seed, stream)` pair addresses an independent, platform-independent
//! random stream; the same seed yields the same draws on every platform and
//! regardless of how other streams were consumed. Independent sub-streams
//! (batch sampling, init sampling, weight init, ...) are derived with
//! [`Rng::stream`] so consuming one can never shift another.

use rand::distributions::uniform::{SampleRange, SampleUniform};
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream tags. Fixed constants so run layouts are stable across versions.
pub mod stream {
    pub const BATCH: u64 = 1;
    pub const INIT_SAMPLING: u64 = 2;
    pub const DECODER_INIT: u64 = 3;
    pub const FEATURE_INIT: u64 = 4;
    pub const SDF_SAMPLES: u64 = 5;
    pub const GRAD_CHECK: u64 = 6;
    pub const SYNTH: u64 = 7;
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    /// Root generator for a run. Equivalent to `stream(seed, 0)`.
    pub fn new(seed: u64) -> Self {
        Self::from_stream(seed, 0)
    }

    /// Independent generator addressed by `(seed, stream)`.
    pub fn from_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { seed, inner }
    }

    /// Fresh generator on a different stream of the same seed.
    pub fn stream(&self, stream: u64) -> Self {
        Self::from_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in [0, 1).
    pub fn f64(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.f64()
    }

    /// Uniform integer in the given range.
    pub fn range<T, R>(&mut self, range: R) -> T
    where
        T: SampleUniform,
        R: SampleRange<T>,
    {
        self.inner.gen_range(range)
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}
