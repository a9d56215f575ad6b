//! Whole-corpus generation: textures, labels, rendered defects, manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::data::{DatasetManifest, GrayImage, Origin, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::rng;
use crate::synth::label::{generate_label, PositionBias, ShapeKind, ShapeParams};
use crate::synth::render::{render_defect, DefectStyle};
use crate::synth::texture::{render_texture, TextureParams};

pub const DEFECT_CLASS: &str = "defect";
pub const NON_DEFECT_CLASS: &str = "non-defect";

/// Sampling ranges for a generated corpus. Each image draws its own
/// parameters from these ranges out of a per-image rng stream, so corpora
/// are reproducible and parallel generation cannot change any image.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    /// Square image side.
    pub size: usize,
    /// Split tag stamped on every record.
    pub split: Split,
    pub base_range: (f32, f32),
    pub noise_range: (f32, f32),
    pub streak_range: (f32, f32),
    pub blur_radius: usize,
    /// Defect intensity shift range.
    pub strength_range: (f32, f32),
    /// Region extent range in pixels.
    pub shape_size: (usize, usize),
    /// Regions per defect image.
    pub count_range: (usize, usize),
    /// Probability that a defect label uses edge-hugging placement.
    pub edge_bias_prob: f64,
    pub styles: Vec<DefectStyle>,
    pub kinds: Vec<ShapeKind>,
}

impl GeneratorConfig {
    /// Defaults scaled for a given image side.
    pub fn for_side(size: usize) -> GeneratorConfig {
        GeneratorConfig {
            size,
            split: Split::Train,
            base_range: (0.35, 0.7),
            noise_range: (0.05, 0.09),
            streak_range: (0.0, 0.06),
            blur_radius: 1,
            strength_range: (0.12, 0.28),
            shape_size: (size / 6, size / 3),
            count_range: (1, 3),
            edge_bias_prob: 0.35,
            styles: DefectStyle::ALL.to_vec(),
            kinds: vec![
                ShapeKind::Rectangle,
                ShapeKind::Ellipse,
                ShapeKind::DiagonalStripe,
                ShapeKind::ConcavePolygon,
            ],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.styles.is_empty() || self.kinds.is_empty() {
            return Err(Error::invalid("generator needs >= 1 style and shape kind"));
        }
        if self.size < 16 {
            return Err(Error::invalid("generator image size must be >= 16"));
        }
        Ok(())
    }
}

fn render_one(cfg: &GeneratorConfig, seed: u64, index: u64, defect: bool) -> Result<GrayImage> {
    let mut rng = rng::derive_indexed(seed, rng::stream::SYNTH, index);
    let texture_params = TextureParams {
        base_intensity: rng.gen_range(cfg.base_range.0..=cfg.base_range.1),
        noise_amplitude: rng.gen_range(cfg.noise_range.0..=cfg.noise_range.1),
        streak_strength: rng.gen_range(cfg.streak_range.0..=cfg.streak_range.1),
        streak_angle: rng.gen_range(0.0..std::f32::consts::PI),
        blur_radius: cfg.blur_radius,
    };
    let texture = render_texture(&texture_params, cfg.size, &mut rng)?;
    if !defect {
        return Ok(texture);
    }

    let kind = cfg.kinds[rng.gen_range(0..cfg.kinds.len())];
    let bias = if rng.gen_range(0.0..1.0) < cfg.edge_bias_prob {
        PositionBias::EdgeHugging
    } else {
        PositionBias::Uniform
    };
    let shape = ShapeParams {
        kind,
        size_range: cfg.shape_size,
        position_bias: bias,
        count_range: cfg.count_range,
    };
    let label = generate_label(&shape, cfg.size, &mut rng)?;
    let style = cfg.styles[rng.gen_range(0..cfg.styles.len())];
    let strength = rng.gen_range(cfg.strength_range.0..=cfg.strength_range.1);
    render_defect(&texture, &label, style, strength, &mut rng)
}

/// Generates `n_defect + n_nondefect` images plus a manifest under
/// `out_dir`. Byte-identical for identical (config, seed); per-image rng
/// streams make the parallel render order irrelevant.
pub fn generate_dataset(
    n_defect: usize,
    n_nondefect: usize,
    seed: u64,
    out_dir: &Path,
    cfg: &GeneratorConfig,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    if n_defect + n_nondefect == 0 {
        return Err(Error::invalid("generate_dataset needs at least one image"));
    }
    let images_dir = out_dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let total = n_defect + n_nondefect;
    let rendered: Vec<Result<(PathBuf, GrayImage, bool)>> = (0..total)
        .into_par_iter()
        .map(|i| {
            let defect = i < n_defect;
            let name = if defect {
                format!("defect_{i:05}.pgm")
            } else {
                format!("clean_{:05}.pgm", i - n_defect)
            };
            let img = render_one(cfg, seed, i as u64, defect)?;
            Ok((PathBuf::from("images").join(name), img, defect))
        })
        .collect();

    let mut manifest = DatasetManifest::new(
        vec![DEFECT_CLASS.to_string(), NON_DEFECT_CLASS.to_string()],
        seed,
    );
    manifest.base_dir = out_dir.to_path_buf();
    for item in rendered {
        let (rel, img, defect) = item?;
        img.save_pgm(&out_dir.join(&rel))?;
        manifest.records.push(SampleRecord {
            path: rel,
            label: if defect { DEFECT_CLASS } else { NON_DEFECT_CLASS }.to_string(),
            material: "synthetic".into(),
            split: cfg.split,
            origin: Origin::Synthetic,
        });
    }
    manifest.save(&out_dir.join("manifest.txt"))?;
    Ok(manifest)
}
