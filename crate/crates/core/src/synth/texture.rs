//! Procedural defect-free surface textures.
//!
//! Blurred white noise over a base intensity plus a directional streak
//! field, imitating the anisotropy of web materials.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::GrayImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureParams {
    /// Background gray level in [0,1].
    pub base_intensity: f32,
    /// Peak amplitude of the white-noise component.
    pub noise_amplitude: f32,
    /// Peak amplitude of the directional streak field.
    pub streak_strength: f32,
    /// Streak direction in radians.
    pub streak_angle: f32,
    /// Box-blur radius applied to the noise component.
    pub blur_radius: usize,
}

impl Default for TextureParams {
    fn default() -> Self {
        TextureParams {
            base_intensity: 0.55,
            noise_amplitude: 0.08,
            streak_strength: 0.05,
            streak_angle: 0.3,
            blur_radius: 1,
        }
    }
}

impl TextureParams {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.base_intensity) {
            return Err(Error::invalid("texture base intensity must be in [0,1]"));
        }
        if self.noise_amplitude < 0.0 || self.streak_strength < 0.0 {
            return Err(Error::invalid("texture amplitudes must be >= 0"));
        }
        Ok(())
    }
}

/// Separable box blur; radius 0 is the identity.
fn box_blur(values: &mut Vec<f32>, size: usize, radius: usize) {
    if radius == 0 {
        return;
    }
    let r = radius as isize;
    let norm = 1.0 / (2 * radius + 1) as f32;
    let mut tmp = vec![0.0f32; values.len()];
    for y in 0..size {
        for x in 0..size {
            let mut acc = 0.0;
            for d in -r..=r {
                let xx = (x as isize + d).clamp(0, size as isize - 1) as usize;
                acc += values[y * size + xx];
            }
            tmp[y * size + x] = acc * norm;
        }
    }
    for x in 0..size {
        for y in 0..size {
            let mut acc = 0.0;
            for d in -r..=r {
                let yy = (y as isize + d).clamp(0, size as isize - 1) as usize;
                acc += tmp[yy * size + x];
            }
            values[y * size + x] = acc * norm;
        }
    }
}

/// Renders a texture. Deterministic under the rng seed; pixels clamp to
/// [0,1] before 8-bit quantization.
pub fn render_texture(params: &TextureParams, size: usize, rng: &mut ChaCha8Rng) -> Result<GrayImage> {
    params.validate()?;
    if size < 4 {
        return Err(Error::invalid("texture size must be >= 4"));
    }
    let mut field = vec![0.0f32; size * size];
    if params.noise_amplitude > 0.0 {
        for v in field.iter_mut() {
            *v = rng.gen_range(-params.noise_amplitude..=params.noise_amplitude);
        }
        box_blur(&mut field, size, params.blur_radius);
    }

    if params.streak_strength > 0.0 {
        // 1-D smoothed noise indexed by the projection onto the streak axis.
        let diag = (size as f32 * std::f32::consts::SQRT_2).ceil() as usize + 3;
        let mut lut: Vec<f32> = (0..diag)
            .map(|_| rng.gen_range(-1.0f32..=1.0))
            .collect();
        // Smooth the lut with a small moving average.
        let smoothed: Vec<f32> = (0..diag)
            .map(|i| {
                let lo = i.saturating_sub(2);
                let hi = (i + 2).min(diag - 1);
                lut[lo..=hi].iter().sum::<f32>() / (hi - lo + 1) as f32
            })
            .collect();
        lut = smoothed;
        let (dx, dy) = (params.streak_angle.cos(), params.streak_angle.sin());
        let offset = size as f32; // keep projections positive
        for y in 0..size {
            for x in 0..size {
                let t = x as f32 * dx + y as f32 * dy + offset;
                let idx = (t as usize).min(diag - 1);
                field[y * size + x] += params.streak_strength * lut[idx];
            }
        }
    }

    let pixels: Vec<u8> = field
        .iter()
        .map(|&v| ((params.base_intensity + v).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    GrayImage::from_pixels(size, size, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CleanseThresholds;
    use crate::rng;

    #[test]
    fn zero_noise_is_constant_base() {
        let params = TextureParams {
            noise_amplitude: 0.0,
            streak_strength: 0.0,
            ..TextureParams::default()
        };
        let mut r = rng::derive(1, rng::stream::SYNTH);
        let img = render_texture(&params, 32, &mut r).unwrap();
        let expect = (0.55f32 * 255.0).round() as u8;
        assert!(img.pixels().iter().all(|&p| p == expect));
    }

    #[test]
    fn default_texture_clears_contrast_floor() {
        let t = CleanseThresholds::default();
        for seed in 0..100 {
            let mut r = rng::derive_indexed(seed, rng::stream::SYNTH, 3);
            let img = render_texture(&TextureParams::default(), 64, &mut r).unwrap();
            let (mean, std) = img.mean_std();
            assert!(std > t.min_std, "seed {seed}: std {std}");
            assert!(mean > t.min_mean && mean < t.max_mean, "seed {seed}: mean {mean}");
        }
    }

    #[test]
    fn fixed_seed_bit_identical() {
        let mut r1 = rng::derive(9, rng::stream::SYNTH);
        let mut r2 = rng::derive(9, rng::stream::SYNTH);
        let a = render_texture(&TextureParams::default(), 48, &mut r1).unwrap();
        let b = render_texture(&TextureParams::default(), 48, &mut r2).unwrap();
        assert_eq!(a, b);
    }
}
