//! Deterministic random streams.
//!
//! Every replica of every ensemble member owns its own ChaCha8 stream whose
//! key is built from `(master_seed, epoch, node, replica)`. Two runs with the
//! same key produce the same variates no matter how the work is scheduled
//! across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identifies one independent stream.
///
/// `epoch` separates successive liftings inside one run (CPI bursts); fixed
/// point solves keep it constant so that the coarse time-stepper sees common
/// random numbers on every evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master: u64,
    pub epoch: u64,
    pub node: u64,
    pub replica: u64,
}

impl StreamKey {
    pub fn new(master: u64, epoch: u64, node: u64, replica: u64) -> Self {
        Self {
            master,
            epoch,
            node,
            replica,
        }
    }
}

/// Uniform generator for one replica.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn from_key(key: StreamKey) -> Self {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&key.master.to_le_bytes());
        seed[8..16].copy_from_slice(&key.epoch.to_le_bytes());
        seed[16..24].copy_from_slice(&key.node.to_le_bytes());
        seed[24..32].copy_from_slice(&key.replica.to_le_bytes());
        Self {
            inner: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn seeded(master: u64) -> Self {
        Self::from_key(StreamKey::new(master, 0, 0, 0))
    }

    /// Uniform variate on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform variate on `(0, 1]`.
    #[inline]
    pub fn uniform_open_closed(&mut self) -> f64 {
        1.0 - self.inner.random::<f64>()
    }

    /// Uniform variate on `[-1, 1)`, the support of the random input.
    #[inline]
    pub fn symmetric(&mut self) -> f64 {
        2.0 * self.uniform() - 1.0
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
