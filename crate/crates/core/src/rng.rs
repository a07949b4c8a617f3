//! Reproducible random streams.
//!
//! A stream is a ChaCha8 keystream selected by `(master_seed, stream_id)`; the
//! stream id is ChaCha's 64-bit nonce, so streams never overlap and a trajectory's
//! samples do not depend on which worker runs it.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    /// Independent stream keyed by `(self, index)`.
    pub fn substream(&self, index: u64) -> Self {
        Self {
            master_seed: splitmix64(self.master_seed ^ splitmix64(self.stream_id.wrapping_add(0x5851_f42d))),
            stream_id: index,
        }
    }

    pub fn sampler(&self) -> Sampler {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        Sampler { rng, spare: None }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform and Gaussian deviates drawn from one stream.
#[derive(Clone, Debug)]
pub struct Sampler {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Sampler {
    /// Uniform on (0, 1].
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Standard normal by Box–Muller; consumes exactly two uniforms per pair.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = (-2.0 * self.uniform_open0().ln()).sqrt();
        let theta = std::f64::consts::TAU * self.uniform();
        let (s, c) = theta.sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}
