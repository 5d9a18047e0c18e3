//! Per-particle random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the run seed, with the
//! 64-bit stream id encoding `(domain, index, channel)`. A stream is read
//! sequentially, one normal per step, so the value used at step `s` is a
//! pure function of `(seed, domain, index, channel, s)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Particles of the `N`-system, shared with their paired limit member.
pub const DOMAIN_PAIR: u64 = 0;
/// Proxy-cloud particles that have no partner.
pub const DOMAIN_CLOUD: u64 = 1;
/// Initial conditions.
pub const DOMAIN_INIT: u64 = 2;
/// Auxiliary draws (subsampling, synthetic tests).
pub const DOMAIN_AUX: u64 = 3;

pub const CH_SC_X: usize = 0;
pub const CH_RC_X: usize = 1;
pub const CH_C: usize = 2;
pub const CH_SPARE: usize = 3;

pub fn stream_id(domain: u64, index: u64, channel: u64) -> u64 {
    (domain << 56) | (index << 2) | channel
}

pub fn stream(seed: u64, domain: u64, index: u64, channel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(domain, index, channel));
    rng
}

/// Seed for replica `k`: `seed ⊕ k·0x9E3779B97F4A7C15`, so replica 0 uses
/// the run seed itself.
pub fn replica_seed(seed: u64, replica: usize) -> u64 {
    seed ^ (replica as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// The four noise channels of one particle.
#[derive(Clone, Debug)]
pub struct ParticleStreams {
    ch: [ChaCha8Rng; 4],
}

impl ParticleStreams {
    pub fn new(seed: u64, domain: u64, index: u64) -> Self {
        Self { ch: std::array::from_fn(|k| stream(seed, domain, index, k as u64)) }
    }

    #[inline]
    pub fn normal(&mut self, channel: usize) -> f64 {
        self.ch[channel].sample(StandardNormal)
    }
}
