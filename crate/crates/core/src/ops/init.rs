//! He (Kaiming) normal weight initialization.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::NormalSampler;
use crate::tensor::Tensor;

/// Standard deviation of the He-normal distribution: `sqrt(2 / fan_in)`.
pub fn he_std(fan_in: usize) -> f32 {
    (2.0f64 / fan_in as f64).sqrt() as f32
}

/// Zero-mean normal tensor with standard deviation `sqrt(2 / fan_in)`.
/// Draws come from the given rng in a fixed order, so a fixed seed gives
/// bit-identical tensors.
pub fn he_init(shape: [usize; 4], fan_in: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if fan_in == 0 {
        return Err(Error::invalid("he_init fan_in must be >= 1"));
    }
    let sigma = he_std(fan_in) as f64;
    let mut sampler = NormalSampler::new();
    Ok(Tensor::from_fn(shape, || {
        (sampler.sample(rng) * sigma) as f32
    }))
}
