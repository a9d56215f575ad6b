//! Seeded random number generation.
//!
//! Every stochastic step in the crate draws from a [`ChaCha8Rng`] derived
//! from a user-visible `u64` seed plus a stream label, so corpora, batch
//! orders and parameter initializations are reproducible bit-for-bit and
//! independent of thread count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-known stream labels. Keeping them in one place avoids accidental
/// stream collisions between subsystems.
pub mod stream {
    pub const INIT: u64 = 0x01;
    pub const SHUFFLE: u64 = 0x02;
    pub const AUGMENT: u64 = 0x03;
    pub const BALANCE: u64 = 0x04;
    pub const SYNTH: u64 = 0x05;
    pub const FOLD: u64 = 0x06;
}

/// splitmix64 finalizer; decorrelates nearby (seed, stream, index) triples.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// RNG for a (seed, stream) pair.
pub fn derive(seed: u64, stream_label: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed ^ mix(stream_label)))
}

/// RNG for an indexed item inside a stream (one per image, per fold, ...).
/// Parallel generation over indices cannot change any item's output.
pub fn derive_indexed(seed: u64, stream_label: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed ^ mix(stream_label) ^ mix(index.wrapping_add(1))))
}

/// Standard-normal sampler (Box–Muller, computed in f64). One spare value is
/// cached so draws come in deterministic order.
pub struct NormalSampler {
    spare: Option<f64>,
}

impl NormalSampler {
    pub fn new() -> Self {
        NormalSampler { spare: None }
    }

    pub fn sample(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        // u1 in (0, 1] so ln(u1) is finite.
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

impl Default for NormalSampler {
    fn default() -> Self {
        Self::new()
    }
}
