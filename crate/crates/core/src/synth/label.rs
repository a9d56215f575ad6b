//! Parametric label images: filled shape masks marking defective regions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Smallest region worth calling a defect.
pub const MIN_REGION_PIXELS: usize = 16;

/// Fraction of the image side that counts as the border band for
/// edge-hugging placement.
pub const EDGE_BAND_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Rectangle,
    Ellipse,
    DiagonalStripe,
    ConcavePolygon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositionBias {
    Uniform,
    EdgeHugging,
}

/// Parameters of the label generator.
#[derive(Debug, Clone)]
pub struct ShapeParams {
    pub kind: ShapeKind,
    /// Characteristic extent in pixels (min, max), inclusive.
    pub size_range: (usize, usize),
    pub position_bias: PositionBias,
    /// Number of regions (min, max), inclusive; (0,0) yields a non-defect
    /// label.
    pub count_range: (usize, usize),
}

impl ShapeParams {
    fn validate(&self, size: usize) -> Result<()> {
        let (smin, smax) = self.size_range;
        if smin < 4 || smin > smax || smax >= size {
            return Err(Error::invalid(format!(
                "shape size range ({smin},{smax}) invalid for image side {size}"
            )));
        }
        let (cmin, cmax) = self.count_range;
        if cmin > cmax {
            return Err(Error::invalid(format!(
                "shape count range ({cmin},{cmax}) is empty"
            )));
        }
        Ok(())
    }
}

/// One defect region as a full-image bitmask.
#[derive(Debug, Clone)]
pub struct Region {
    pub mask: Vec<bool>,
    pub pixel_count: usize,
}

impl Region {
    /// Mask centroid in pixel coordinates.
    pub fn centroid(&self, size: usize) -> (f64, f64) {
        let mut sx = 0.0;
        let mut sy = 0.0;
        for (i, &m) in self.mask.iter().enumerate() {
            if m {
                sx += (i % size) as f64;
                sy += (i / size) as f64;
            }
        }
        let n = self.pixel_count as f64;
        (sx / n, sy / n)
    }
}

/// Square label image: defect-free background plus filled defect regions.
#[derive(Debug, Clone)]
pub struct LabelImage {
    pub size: usize,
    pub regions: Vec<Region>,
}

impl LabelImage {
    pub fn is_defect(&self) -> bool {
        !self.regions.is_empty()
    }
}

/// Draws a label image: region count from `count_range`, each region a
/// filled shape of the configured kind, sized from `size_range` and placed
/// per the position bias. Deterministic under the rng seed.
pub fn generate_label(params: &ShapeParams, size: usize, rng: &mut ChaCha8Rng) -> Result<LabelImage> {
    params.validate(size)?;
    let count = rng.gen_range(params.count_range.0..=params.count_range.1);
    let mut regions = Vec::with_capacity(count);
    for _ in 0..count {
        regions.push(draw_region(params, size, rng)?);
    }
    Ok(LabelImage { size, regions })
}

fn draw_region(params: &ShapeParams, size: usize, rng: &mut ChaCha8Rng) -> Result<Region> {
    let mut extent = rng.gen_range(params.size_range.0..=params.size_range.1);
    // Grow until the rasterized region clears the minimum pixel count.
    for _ in 0..12 {
        let half = (extent as f64 / 2.0).ceil();
        let (cx, cy) = place_center(params.position_bias, size, half, rng);
        let mask = rasterize(params.kind, size, cx, cy, extent, rng);
        let pixel_count = mask.iter().filter(|&&m| m).count();
        if pixel_count >= MIN_REGION_PIXELS {
            return Ok(Region { mask, pixel_count });
        }
        extent = (extent + 3).min(size - 1);
    }
    Err(Error::invalid(format!(
        "could not rasterize a region of >= {MIN_REGION_PIXELS} pixels at extent {extent}"
    )))
}

fn place_center(
    bias: PositionBias,
    size: usize,
    half: f64,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let s = size as f64;
    let lo = half;
    let hi = (s - half).max(lo);
    match bias {
        PositionBias::Uniform => (rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)),
        PositionBias::EdgeHugging => {
            let band = s * EDGE_BAND_FRACTION;
            let along = rng.gen_range(lo..=hi);
            let depth = rng.gen_range(0.0..band).clamp(lo, hi);
            let far = (s - depth).clamp(lo, hi);
            match rng.gen_range(0..4u8) {
                0 => (along, depth),  // top
                1 => (along, far),    // bottom
                2 => (depth, along),  // left
                _ => (far, along),    // right
            }
        }
    }
}

fn rasterize(
    kind: ShapeKind,
    size: usize,
    cx: f64,
    cy: f64,
    extent: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<bool> {
    let mut mask = vec![false; size * size];
    let e = extent as f64;
    match kind {
        ShapeKind::Rectangle => {
            let aspect = rng.gen_range(0.5..=1.0);
            let hw = e / 2.0;
            let hh = (e * aspect / 2.0).max(1.5);
            fill_if(&mut mask, size, |x, y| {
                (x - cx).abs() <= hw && (y - cy).abs() <= hh
            });
        }
        ShapeKind::Ellipse => {
            let aspect = rng.gen_range(0.55..=1.0);
            let a = (e / 2.0).max(2.0);
            let b = (a * aspect).max(2.0);
            fill_if(&mut mask, size, |x, y| {
                let dx = (x - cx) / a;
                let dy = (y - cy) / b;
                dx * dx + dy * dy <= 1.0
            });
        }
        ShapeKind::DiagonalStripe => {
            // Capsule around a segment through (cx, cy) at roughly 45 deg.
            let base = if rng.gen_range(0..2u8) == 0 {
                std::f64::consts::FRAC_PI_4
            } else {
                -std::f64::consts::FRAC_PI_4
            };
            let angle = base + rng.gen_range(-0.35..0.35);
            let half_len = e * 0.75;
            let half_thick = (e / 6.0).max(1.6);
            let (dx, dy) = (angle.cos(), angle.sin());
            fill_if(&mut mask, size, |x, y| {
                let px = x - cx;
                let py = y - cy;
                let along = (px * dx + py * dy).clamp(-half_len, half_len);
                let qx = px - along * dx;
                let qy = py - along * dy;
                (qx * qx + qy * qy).sqrt() <= half_thick
            });
        }
        ShapeKind::ConcavePolygon => {
            // Star polygon: alternating outer/inner radii make it concave.
            let spikes = rng.gen_range(5..=8usize);
            let r_out = (e / 2.0).max(3.0);
            let r_in = r_out * rng.gen_range(0.35..=0.55);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let n = spikes * 2;
            let verts: Vec<(f64, f64)> = (0..n)
                .map(|i| {
                    let r = if i % 2 == 0 { r_out } else { r_in };
                    let t = phase + i as f64 * std::f64::consts::TAU / n as f64;
                    (cx + r * t.cos(), cy + r * t.sin())
                })
                .collect();
            fill_if(&mut mask, size, |x, y| point_in_polygon(x, y, &verts));
        }
    }
    mask
}

fn fill_if(mask: &mut [bool], size: usize, inside: impl Fn(f64, f64) -> bool) {
    for y in 0..size {
        for x in 0..size {
            if inside(x as f64, y as f64) {
                mask[y * size + x] = true;
            }
        }
    }
}

fn point_in_polygon(x: f64, y: f64, verts: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = verts.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = verts[i];
        let (xj, yj) = verts[j];
        if ((yi > y) != (yj > y)) && (x < (xj - xi) * (y - yi) / (yj - yi) + xi) {
            inside = !inside;
        }
        j = i;
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn params(kind: ShapeKind, bias: PositionBias) -> ShapeParams {
        ShapeParams {
            kind,
            size_range: (10, 20),
            position_bias: bias,
            count_range: (1, 3),
        }
    }

    #[test]
    fn zero_count_gives_empty_label() {
        let p = ShapeParams {
            count_range: (0, 0),
            ..params(ShapeKind::Rectangle, PositionBias::Uniform)
        };
        let mut r = rng::derive(1, rng::stream::SYNTH);
        let label = generate_label(&p, 64, &mut r).unwrap();
        assert!(!label.is_defect());
    }

    #[test]
    fn fixed_seed_fixed_mask() {
        let p = params(ShapeKind::DiagonalStripe, PositionBias::Uniform);
        let mut r1 = rng::derive(5, rng::stream::SYNTH);
        let mut r2 = rng::derive(5, rng::stream::SYNTH);
        let a = generate_label(&p, 64, &mut r1).unwrap();
        let b = generate_label(&p, 64, &mut r2).unwrap();
        assert_eq!(a.regions.len(), b.regions.len());
        for (ra, rb) in a.regions.iter().zip(b.regions.iter()) {
            assert_eq!(ra.mask, rb.mask);
        }
    }

    #[test]
    fn all_kinds_meet_min_pixels() {
        for kind in [
            ShapeKind::Rectangle,
            ShapeKind::Ellipse,
            ShapeKind::DiagonalStripe,
            ShapeKind::ConcavePolygon,
        ] {
            for seed in 0..30 {
                let p = params(kind, PositionBias::Uniform);
                let mut r = rng::derive_indexed(seed, rng::stream::SYNTH, 1);
                let label = generate_label(&p, 64, &mut r).unwrap();
                for region in &label.regions {
                    assert!(
                        region.pixel_count >= MIN_REGION_PIXELS,
                        "{kind:?} seed {seed}: {} px",
                        region.pixel_count
                    );
                }
            }
        }
    }

    #[test]
    fn edge_bias_concentrates_centroids() {
        let p = ShapeParams {
            count_range: (1, 1),
            size_range: (8, 14),
            ..params(ShapeKind::Ellipse, PositionBias::EdgeHugging)
        };
        let size = 64usize;
        let band = size as f64 * EDGE_BAND_FRACTION;
        let mut in_band = 0usize;
        let total = 1000usize;
        for seed in 0..total {
            let mut r = rng::derive_indexed(seed as u64, rng::stream::SYNTH, 2);
            let label = generate_label(&p, size, &mut r).unwrap();
            let (cx, cy) = label.regions[0].centroid(size);
            let d = cx
                .min(cy)
                .min(size as f64 - 1.0 - cx)
                .min(size as f64 - 1.0 - cy);
            if d <= band {
                in_band += 1;
            }
        }
        assert!(
            in_band as f64 >= 0.9 * total as f64,
            "only {in_band}/{total} centroids in the border band"
        );
    }
}
