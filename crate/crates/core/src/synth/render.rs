//! Deterministic label-to-image defect rendering.
//!
//! Pixels under the label's region masks are perturbed per the chosen style
//! with borders feathered inward; every pixel outside the masks stays
//! bit-identical to the input texture.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::GrayImage;
use crate::error::{Error, Result};
use crate::synth::label::LabelImage;

/// Feather width in pixels at region borders.
pub const FEATHER_RADIUS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefectStyle {
    /// Region darker than its surroundings.
    DarkBlotch,
    /// Region brighter than its surroundings.
    BrightBlotch,
    /// High-variance speckle with a slight dark bias.
    Speckle,
    /// Strong dark scratch with along-track jitter.
    ScratchLine,
}

impl DefectStyle {
    pub const ALL: [DefectStyle; 4] = [
        DefectStyle::DarkBlotch,
        DefectStyle::BrightBlotch,
        DefectStyle::Speckle,
        DefectStyle::ScratchLine,
    ];
}

impl std::fmt::Display for DefectStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DefectStyle::DarkBlotch => "dark-blotch",
            DefectStyle::BrightBlotch => "bright-blotch",
            DefectStyle::Speckle => "speckle",
            DefectStyle::ScratchLine => "scratch-line",
        })
    }
}

/// Manhattan distance to the nearest non-mask pixel, capped at
/// `FEATHER_RADIUS + 1`; two-pass chamfer.
fn inner_distance(mask: &[bool], size: usize) -> Vec<u8> {
    let cap = (FEATHER_RADIUS + 1) as u8;
    let mut dist: Vec<u8> = mask.iter().map(|&m| if m { u8::MAX } else { 0 }).collect();
    for y in 0..size {
        for x in 0..size {
            let i = y * size + x;
            if dist[i] == 0 {
                continue;
            }
            let mut best = cap;
            if x > 0 {
                best = best.min(dist[i - 1].saturating_add(1));
            } else {
                best = best.min(1);
            }
            if y > 0 {
                best = best.min(dist[i - size].saturating_add(1));
            } else {
                best = best.min(1);
            }
            dist[i] = best;
        }
    }
    for y in (0..size).rev() {
        for x in (0..size).rev() {
            let i = y * size + x;
            if dist[i] == 0 {
                continue;
            }
            let mut best = dist[i];
            if x + 1 < size {
                best = best.min(dist[i + 1].saturating_add(1));
            } else {
                best = best.min(1);
            }
            if y + 1 < size {
                best = best.min(dist[i + size].saturating_add(1));
            } else {
                best = best.min(1);
            }
            dist[i] = best.min(cap);
        }
    }
    dist
}

/// Applies one defect style under the label's masks.
///
/// `strength` is the target intensity shift in [0,1] units. Fails on an
/// empty region list (use the plain texture as a non-defect sample) or on a
/// size mismatch.
pub fn render_defect(
    texture: &GrayImage,
    label: &LabelImage,
    style: DefectStyle,
    strength: f32,
    rng: &mut ChaCha8Rng,
) -> Result<GrayImage> {
    if label.regions.is_empty() {
        return Err(Error::invalid(
            "label has no defect regions; a non-defect sample is the texture itself",
        ));
    }
    if texture.width() != label.size || texture.height() != label.size {
        return Err(Error::ShapeMismatch {
            context: "render_defect",
            expected: format!("{0}x{0} texture", label.size),
            actual: format!("{}x{}", texture.width(), texture.height()),
        });
    }
    if !(0.01..=0.5).contains(&strength) {
        return Err(Error::invalid(format!(
            "defect strength {strength} outside [0.01, 0.5]"
        )));
    }

    let size = label.size;
    let mut out = texture.clone();
    for region in &label.regions {
        let dist = inner_distance(&region.mask, size);
        for (i, &m) in region.mask.iter().enumerate() {
            if !m {
                continue;
            }
            let alpha = dist[i] as f32 / (FEATHER_RADIUS + 1) as f32;
            let v = out.pixels()[i] as f32 / 255.0;
            let new = match style {
                DefectStyle::DarkBlotch => {
                    let jitter = rng.gen_range(-0.15..=0.15) * strength;
                    v - alpha * (strength + jitter)
                }
                DefectStyle::BrightBlotch => {
                    let jitter = rng.gen_range(-0.15..=0.15) * strength;
                    v + alpha * (strength + jitter)
                }
                DefectStyle::Speckle => {
                    let spike = rng.gen_range(-2.0..=2.0) * strength;
                    v + alpha * (spike - 0.4 * strength)
                }
                DefectStyle::ScratchLine => {
                    let track = rng.gen_range(0.0..=0.6) * strength;
                    v - alpha * (0.7 * strength + track)
                }
            };
            out.pixels_mut()[i] = (new.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    Ok(out)
}
