//! Seeded, stream-addressable random number generation.
//!
//! Every random draw in the workbench comes from an [`Rng`] identified by a
//! `(seed, stream)` pair. Streams are derived from component names so that
//! calibration, test and training data never share a stream.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deterministic random source: identical `(seed, stream)` pairs replay
/// identical draws.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    /// Stream derived from a component name and an index, e.g. `("test", 3)`.
    pub fn named(seed: u64, component: &str, index: u64) -> Self {
        Self::new(seed, stream_id(component, index))
    }

    /// A child generator on a stream derived from this one.
    pub fn fork(&self, component: &str, index: u64) -> Self {
        Self::new(self.seed, stream_id(component, index) ^ self.stream.rotate_left(17))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on `[lo, hi]`; returns `lo` when the interval is degenerate.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            lo
        } else {
            lo + (hi - lo) * self.uniform()
        }
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// FNV-1a over the component name followed by the little-endian index.
pub fn stream_id(component: &str, index: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    component
        .as_bytes()
        .iter()
        .chain(index.to_le_bytes().iter())
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}
