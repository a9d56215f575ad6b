//! 8-bit grayscale images: PGM/PNG I/O and the geometric primitives the
//! pipeline needs (bilinear scaling, crops, mirrors, right-angle rotations).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

/// How a decoded file mapped onto 8-bit grayscale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Native 8-bit grayscale.
    Gray8,
    /// Color input, converted via channel average.
    ConvertedColor,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> GrayImage {
        assert!(width >= 1 && height >= 1, "image dims must be >= 1");
        GrayImage {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<GrayImage> {
        if pixels.len() != width * height || width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "pixel buffer of {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Mean and standard deviation in [0,1] units.
    pub fn mean_std(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let mut sum = 0.0f64;
        for &p in &self.pixels {
            sum += p as f64;
        }
        let mean = sum / n / 255.0;
        let mut sq = 0.0f64;
        for &p in &self.pixels {
            let d = p as f64 / 255.0 - mean;
            sq += d * d;
        }
        (mean, (sq / n).sqrt())
    }

    /// Bilinear resample to the exact target size. Same-size calls return a
    /// copy, so identity scales are bit-exact.
    pub fn resize_bilinear(&self, new_w: usize, new_h: usize) -> GrayImage {
        assert!(new_w >= 1 && new_h >= 1);
        if new_w == self.width && new_h == self.height {
            return self.clone();
        }
        let mut out = GrayImage::new(new_w, new_h);
        let sx = self.width as f32 / new_w as f32;
        let sy = self.height as f32 / new_h as f32;
        for y in 0..new_h {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f32;
            for x in 0..new_w {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f32;
                let top = self.get(x0, y0) as f32 * (1.0 - wx) + self.get(x1, y0) as f32 * wx;
                let bot = self.get(x0, y1) as f32 * (1.0 - wx) + self.get(x1, y1) as f32 * wx;
                let v = top * (1.0 - wy) + bot * wy;
                out.set(x, y, v.round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }

    /// Scales so the shorter side equals `target`, preserving aspect ratio.
    pub fn scale_shorter_side(&self, target: usize) -> GrayImage {
        let (w, h) = (self.width, self.height);
        if w.min(h) == target {
            return self.clone();
        }
        let scale = target as f64 / w.min(h) as f64;
        let (nw, nh) = if w <= h {
            (target, ((h as f64 * scale).round() as usize).max(target))
        } else {
            (((w as f64 * scale).round() as usize).max(target), target)
        };
        self.resize_bilinear(nw, nh)
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> GrayImage {
        assert!(x + w <= self.width && y + h <= self.height, "crop out of bounds");
        let mut out = GrayImage::new(w, h);
        for row in 0..h {
            let src = &self.pixels[(y + row) * self.width + x..(y + row) * self.width + x + w];
            out.pixels[row * w..(row + 1) * w].copy_from_slice(src);
        }
        out
    }

    pub fn mirror_horizontal(&self) -> GrayImage {
        let mut out = GrayImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(x, y, self.get(self.width - 1 - x, y));
            }
        }
        out
    }

    /// Lossless right-angle rotation (clockwise degrees: 90, 180 or 270).
    pub fn rotate(&self, degrees: u32) -> Result<GrayImage> {
        let (w, h) = (self.width, self.height);
        let out = match degrees {
            90 => {
                let mut out = GrayImage::new(h, w);
                for y in 0..w {
                    for x in 0..h {
                        out.set(x, y, self.get(y, h - 1 - x));
                    }
                }
                out
            }
            180 => {
                let mut out = GrayImage::new(w, h);
                for y in 0..h {
                    for x in 0..w {
                        out.set(x, y, self.get(w - 1 - x, h - 1 - y));
                    }
                }
                out
            }
            270 => {
                let mut out = GrayImage::new(h, w);
                for y in 0..w {
                    for x in 0..h {
                        out.set(x, y, self.get(w - 1 - y, x));
                    }
                }
                out
            }
            other => {
                return Err(Error::invalid(format!(
                    "rotation must be 90, 180 or 270 degrees, got {other}"
                )))
            }
        };
        Ok(out)
    }

    /// (1, 1, H, W) tensor with pixels mapped to [0, 1].
    pub fn to_tensor(&self) -> Tensor {
        let data: Vec<f32> = self.pixels.iter().map(|&p| p as f32 / 255.0).collect();
        Tensor::from_vec([1, 1, self.height, self.width], data).expect("length matches")
    }

    /// Loads a PGM or PNG file, converting color PNGs by channel average.
    pub fn load(path: &Path) -> Result<(GrayImage, SourceKind)> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "pgm" => load_pgm(path).map(|img| (img, SourceKind::Gray8)),
            "png" => load_png(path),
            other => Err(Error::format(
                path,
                format!("unsupported image extension `{other}` (expected pgm or png)"),
            )),
        }
    }

    /// Saves by extension (.pgm or .png), 8-bit grayscale.
    pub fn save(&self, path: &Path) -> Result<()> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "pgm" => self.save_pgm(path),
            "png" => self.save_png(path),
            other => Err(Error::format(
                path,
                format!("unsupported image extension `{other}` (expected pgm or png)"),
            )),
        }
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)
            .and_then(|_| w.write_all(&self.pixels))
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::format(path, format!("png header: {e}")))?;
        writer
            .write_image_data(&self.pixels)
            .map_err(|e| Error::format(path, format!("png data: {e}")))
    }
}

fn load_pgm(path: &Path) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(Error::format(path, "not a binary PGM (P5) file"));
    }

    // Header: three whitespace-separated tokens after the magic, with
    // '#' comments allowed between tokens.
    let mut pos = 2usize;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "malformed PGM header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::format(path, "malformed PGM header"))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(
            path,
            format!("PGM maxval {maxval} is not 8-bit"),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::format(path, "PGM raster truncated"));
    }
    GrayImage::from_pixels(width, height, bytes[pos..pos + need].to_vec())
}

fn load_png(path: &Path) -> Result<(GrayImage, SourceKind)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(file);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, format!("png: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, format!("png: {e}")))?;
    buf.truncate(info.buffer_size());
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(
            path,
            format!("png bit depth {:?} is not 8-bit", info.bit_depth),
        ));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let gray_avg = |chunk: &[u8]| -> u8 {
        let sum = chunk[0] as u16 + chunk[1] as u16 + chunk[2] as u16;
        ((sum as f32 / 3.0).round()) as u8
    };
    match info.color_type {
        png::ColorType::Grayscale => {
            GrayImage::from_pixels(w, h, buf).map(|i| (i, SourceKind::Gray8))
        }
        png::ColorType::GrayscaleAlpha => {
            let pixels = buf.chunks_exact(2).map(|c| c[0]).collect();
            GrayImage::from_pixels(w, h, pixels).map(|i| (i, SourceKind::Gray8))
        }
        png::ColorType::Rgb => {
            let pixels = buf.chunks_exact(3).map(gray_avg).collect();
            GrayImage::from_pixels(w, h, pixels).map(|i| (i, SourceKind::ConvertedColor))
        }
        png::ColorType::Rgba => {
            let pixels = buf.chunks_exact(4).map(gray_avg).collect();
            GrayImage::from_pixels(w, h, pixels).map(|i| (i, SourceKind::ConvertedColor))
        }
        other => Err(Error::format(
            path,
            format!("png color type {other:?} unsupported"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noise_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = crate::rng::derive(seed, 0x99);
        let pixels = (0..w * h).map(|_| rng.gen()).collect();
        GrayImage::from_pixels(w, h, pixels).unwrap()
    }

    #[test]
    fn pgm_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let img = noise_image(13, 7, 1);
        let p = dir.path().join("x.pgm");
        img.save(&p).unwrap();
        let (back, kind) = GrayImage::load(&p).unwrap();
        assert_eq!(kind, SourceKind::Gray8);
        assert_eq!(back, img);
    }

    #[test]
    fn png_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let img = noise_image(9, 11, 2);
        let p = dir.path().join("x.png");
        img.save(&p).unwrap();
        let (back, kind) = GrayImage::load(&p).unwrap();
        assert_eq!(kind, SourceKind::Gray8);
        assert_eq!(back, img);
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let img = noise_image(8, 12, 3);
        let r = img
            .rotate(90)
            .and_then(|i| i.rotate(90))
            .and_then(|i| i.rotate(90))
            .and_then(|i| i.rotate(90))
            .unwrap();
        assert_eq!(r, img);
        assert_eq!(img.rotate(180).unwrap().rotate(180).unwrap(), img);
        assert_eq!(img.rotate(90).unwrap().rotate(270).unwrap(), img);
    }

    #[test]
    fn mirror_twice_is_identity() {
        let img = noise_image(10, 4, 4);
        assert_eq!(img.mirror_horizontal().mirror_horizontal(), img);
    }

    #[test]
    fn shorter_side_scaling() {
        let img = noise_image(100, 50, 5);
        let s = img.scale_shorter_side(64);
        assert_eq!(s.height(), 64);
        assert_eq!(s.width(), 128);
        // Already at target: identity.
        let t = noise_image(64, 96, 6);
        assert_eq!(t.scale_shorter_side(64), t);
    }

    #[test]
    fn tensor_values_in_unit_range() {
        let img = noise_image(6, 6, 7);
        let t = img.to_tensor();
        assert_eq!(t.shape(), [1, 1, 6, 6]);
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn crop_extracts_window() {
        let mut img = GrayImage::new(4, 4);
        img.set(2, 1, 200);
        let c = img.crop(2, 1, 2, 2);
        assert_eq!(c.get(0, 0), 200);
    }
}
