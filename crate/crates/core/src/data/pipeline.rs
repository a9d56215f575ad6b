//! The three-step dataset methodology (aggregate, cleanse, balance) plus
//! offline rotation augmentation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::data::image::{GrayImage, SourceKind};
use crate::data::manifest::{DatasetManifest, Origin, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::rng;

/// One image source directory with the labels to attach to its files.
#[derive(Debug, Clone)]
pub struct SourceSpec {
    pub dir: PathBuf,
    pub label: String,
    pub material: String,
    pub split: Split,
}

/// What aggregation did to non-conforming or repeated files.
#[derive(Debug, Default)]
pub struct AggregateLog {
    /// Color images converted to grayscale (original path).
    pub converted: Vec<PathBuf>,
    /// Files skipped, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
    /// Files already contributed by an earlier source.
    pub duplicates: Vec<PathBuf>,
}

/// Collects images from the sources into one manifest.
///
/// Directory entries are visited in sorted name order. Native 8-bit
/// grayscale files are referenced in place; color PNGs are converted by
/// channel average into `converted_dir` and logged. Unreadable files are
/// skipped with a reason. An empty result is an error.
pub fn aggregate(
    sources: &[SourceSpec],
    classes: &[String],
    seed: u64,
    converted_dir: &Path,
) -> Result<(DatasetManifest, AggregateLog)> {
    let mut manifest = DatasetManifest::new(classes.to_vec(), seed);
    let mut log = AggregateLog::default();
    let mut seen: BTreeSet<PathBuf> = BTreeSet::new();

    for source in sources {
        if manifest.class_index(&source.label).is_none() {
            return Err(Error::invalid(format!(
                "source {} labeled `{}` outside class set {:?}",
                source.dir.display(),
                source.label,
                classes
            )));
        }
        let mut entries: Vec<PathBuf> = fs::read_dir(&source.dir)
            .map_err(|e| Error::io(&source.dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
                    .unwrap_or(false)
            })
            .collect();
        entries.sort();

        for path in entries {
            let canonical = path.canonicalize().unwrap_or_else(|_| path.clone());
            if !seen.insert(canonical.clone()) {
                log.duplicates.push(path.clone());
                continue;
            }
            match GrayImage::load(&path) {
                Ok((_, SourceKind::Gray8)) => {
                    manifest.records.push(SampleRecord {
                        path: canonical,
                        label: source.label.clone(),
                        material: source.material.clone(),
                        split: source.split,
                        origin: Origin::Real,
                    });
                }
                Ok((img, SourceKind::ConvertedColor)) => {
                    fs::create_dir_all(converted_dir).map_err(|e| Error::io(converted_dir, e))?;
                    let stem = path
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or("image");
                    let mut target = converted_dir.join(format!("{stem}_gray.pgm"));
                    let mut n = 1usize;
                    while target.exists() {
                        target = converted_dir.join(format!("{stem}_gray_{n}.pgm"));
                        n += 1;
                    }
                    img.save_pgm(&target)?;
                    log.converted.push(path.clone());
                    manifest.records.push(SampleRecord {
                        path: target,
                        label: source.label.clone(),
                        material: source.material.clone(),
                        split: source.split,
                        origin: Origin::Real,
                    });
                }
                Err(e) => {
                    log.skipped.push((path.clone(), e.to_string()));
                }
            }
        }
    }

    if manifest.records.is_empty() {
        return Err(Error::invalid(
            "aggregation produced no records (no readable grayscale images found)",
        ));
    }
    manifest.validate()?;
    Ok((manifest, log))
}

/// Intensity bounds for dropping flat or saturated frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleanseThresholds {
    pub min_mean: f64,
    pub max_mean: f64,
    pub min_std: f64,
}

impl Default for CleanseThresholds {
    fn default() -> Self {
        CleanseThresholds {
            min_mean: 0.02,
            max_mean: 0.98,
            min_std: 0.004,
        }
    }
}

impl CleanseThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.min_mean && self.min_mean < self.max_mean && self.max_mean <= 1.0) {
            return Err(Error::invalid(format!(
                "cleanse thresholds need 0 <= min_mean < max_mean <= 1, got {} and {}",
                self.min_mean, self.max_mean
            )));
        }
        if self.min_std < 0.0 {
            return Err(Error::invalid("cleanse min_std must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// Mean below the floor: effectively black.
    Black,
    /// Mean above the ceiling: effectively white.
    White,
    /// Standard deviation below the contrast floor: flat frame.
    Flat,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::Black => "black",
            RejectReason::White => "white",
            RejectReason::Flat => "flat",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Rejection {
    pub path: PathBuf,
    pub reason: RejectReason,
    pub statistic: f64,
}

/// Drops invalid frames: mean below `min_mean`, mean above `max_mean`, or
/// standard deviation below `min_std` (all in [0,1] units).
pub fn cleanse(
    manifest: &DatasetManifest,
    thresholds: &CleanseThresholds,
) -> Result<(DatasetManifest, Vec<Rejection>)> {
    thresholds.validate()?;
    let mut kept = manifest.clone();
    kept.records.clear();
    let mut rejections = Vec::new();
    for record in &manifest.records {
        let path = manifest.resolve(record);
        let (img, _) = GrayImage::load(&path)?;
        let (mean, std) = img.mean_std();
        if mean < thresholds.min_mean {
            rejections.push(Rejection {
                path,
                reason: RejectReason::Black,
                statistic: mean,
            });
        } else if mean > thresholds.max_mean {
            rejections.push(Rejection {
                path,
                reason: RejectReason::White,
                statistic: mean,
            });
        } else if std < thresholds.min_std {
            rejections.push(Rejection {
                path,
                reason: RejectReason::Flat,
                statistic: std,
            });
        } else {
            kept.records.push(record.clone());
        }
    }
    Ok((kept, rejections))
}

/// Plain-text rejection report: one line per drop with the statistic.
pub fn write_rejection_report(path: &Path, rejections: &[Rejection]) -> Result<()> {
    let mut text = String::from("# surfclass cleanse report\n# path\treason\tstatistic\n");
    for r in rejections {
        text.push_str(&format!(
            "{}\t{}\t{:.6}\n",
            r.path.display(),
            r.reason,
            r.statistic
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A (class, material) cell that could not fill its quota.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shortfall {
    pub class: String,
    pub material: String,
    pub have: usize,
    pub quota: usize,
}

/// Caps every (class, material) cell at `quota` records via a seeded uniform
/// draw; undersupplied cells are reported, never padded.
pub fn balance(
    manifest: &DatasetManifest,
    quota: usize,
    seed: u64,
) -> Result<(DatasetManifest, Vec<Shortfall>)> {
    if quota == 0 {
        return Err(Error::invalid("balance quota must be >= 1"));
    }
    let mut cells: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        cells
            .entry((r.label.clone(), r.material.clone()))
            .or_default()
            .push(i);
    }

    let mut selected: BTreeSet<usize> = BTreeSet::new();
    let mut shortfalls = Vec::new();
    for (cell_idx, ((label, material), indices)) in cells.into_iter().enumerate() {
        if indices.len() <= quota {
            if indices.len() < quota {
                shortfalls.push(Shortfall {
                    class: label,
                    material,
                    have: indices.len(),
                    quota,
                });
            }
            selected.extend(indices);
        } else {
            let mut rng = rng::derive_indexed(seed, rng::stream::BALANCE, cell_idx as u64);
            let mut pool = indices;
            pool.shuffle(&mut rng);
            selected.extend(pool.into_iter().take(quota));
        }
    }

    let mut out = manifest.clone();
    out.seed = seed;
    out.records = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(i, _)| selected.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    Ok((out, shortfalls))
}

/// Emits lossless rotated copies of every record as new
/// `derived-augmentation` records with labels preserved. Rotated images are
/// written into `out_dir`.
pub fn offline_rotations(
    manifest: &DatasetManifest,
    angles: &[u32],
    out_dir: &Path,
) -> Result<DatasetManifest> {
    for &a in angles {
        if !matches!(a, 90 | 180 | 270) {
            return Err(Error::invalid(format!(
                "offline rotation angles must be in {{90,180,270}}, got {a}"
            )));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut out = manifest.clone();
    for (i, record) in manifest.records.iter().enumerate() {
        let src = manifest.resolve(record);
        let (img, _) = GrayImage::load(&src)?;
        let stem = src.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        for &angle in angles {
            let rotated = img.rotate(angle)?;
            let target = out_dir.join(format!("{stem}_{i:05}_rot{angle}.pgm"));
            rotated.save_pgm(&target)?;
            out.records.push(SampleRecord {
                path: target,
                label: record.label.clone(),
                material: record.material.clone(),
                split: record.split,
                origin: Origin::DerivedAugmentation,
            });
        }
    }
    out.validate()?;
    Ok(out)
}

/// Plain-text shortfall report for balance().
pub fn write_shortfall_report(path: &Path, shortfalls: &[Shortfall]) -> Result<()> {
    let mut text = String::from("# surfclass balance shortfall report\n# class\tmaterial\thave\tquota\n");
    for s in shortfalls {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            s.class, s.material, s.have, s.quota
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
