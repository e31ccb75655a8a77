//! Deterministic labelled random streams.
//!
//! A run owns one master seed. Every consumer (role assignment, failure
//! sampling, the per-round draws of a protocol, the engine's target
//! resolution) opens its own stream from `(seed, label)`, so adding draws in
//! one place never shifts the sequence seen by another.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::model::NodeId;

pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        RngStream { inner: ChaCha8Rng::from_seed(key) }
    }

    /// Stream for one round of one consumer, e.g. `("engine", 17)`.
    pub fn for_round(seed: u64, purpose: &str, round: u32) -> Self {
        Self::new(seed, &format!("{purpose}/round/{round}"))
    }

    /// Uniform node from `V \ {exclude}`.
    #[inline]
    pub fn other_node(&mut self, n: u32, exclude: NodeId) -> NodeId {
        debug_assert!(n >= 2);
        let x = self.inner.random_range(0..n - 1);
        NodeId(if x >= exclude.0 { x + 1 } else { x })
    }

    #[inline]
    pub fn below(&mut self, bound: u32) -> u32 {
        self.inner.random_range(0..bound)
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            self.inner.random_bool(p)
        }
    }

    #[inline]
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
