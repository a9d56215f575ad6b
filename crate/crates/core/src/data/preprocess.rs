//! Per-image preprocessing into network input tensors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::image::GrayImage;
use crate::tensor::Tensor;

/// Target side plus the scale-jitter range for training crops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessConfig {
    pub target_side: usize,
    pub scale_min: usize,
    pub scale_max: usize,
}

impl PreprocessConfig {
    /// Default jitter: shorter side scaled into [side, side * 5/4].
    pub fn for_side(side: usize) -> PreprocessConfig {
        PreprocessConfig {
            target_side: side,
            scale_min: side,
            scale_max: side * 5 / 4,
        }
    }
}

/// Training path: scale the shorter side to a random size in
/// [scale_min, scale_max], take a random target-side crop, mirror
/// horizontally with probability 1/2, map to [0,1].
///
/// Draw order from `rng` is fixed: scale, crop x, crop y, mirror.
pub fn train_preprocess(img: &GrayImage, cfg: &PreprocessConfig, rng: &mut ChaCha8Rng) -> Tensor {
    let side = cfg.target_side;
    let scale = rng.gen_range(cfg.scale_min..=cfg.scale_max);
    let scaled = img.scale_shorter_side(scale.max(side));
    let max_x = scaled.width() - side;
    let max_y = scaled.height() - side;
    let x = rng.gen_range(0..=max_x);
    let y = rng.gen_range(0..=max_y);
    let mut crop = scaled.crop(x, y, side, side);
    if rng.gen_range(0..2u8) == 1 {
        crop = crop.mirror_horizontal();
    }
    crop.to_tensor()
}

/// Testing path: deterministic shorter-side scale to exactly `target_side`,
/// then the center crop. No mirroring.
pub fn test_preprocess(img: &GrayImage, target_side: usize) -> Tensor {
    let scaled = img.scale_shorter_side(target_side);
    let x = (scaled.width() - target_side) / 2;
    let y = (scaled.height() - target_side) / 2;
    scaled.crop(x, y, target_side, target_side).to_tensor()
}
