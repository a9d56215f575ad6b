//! Adapter for a directory-per-class steel defect corpus (NEU layout).
//!
//! Expects `dir/<class-name>/*.{pgm,png}`; the public NEU images ship as
//! 200x200 BMP files and must be converted to PGM or PNG beforehand. Class
//! names are the sorted subdirectory names; all records are tagged material
//! `steel` and split `train` (the cross-validation harness reassigns
//! splits fold by fold).

use std::fs;
use std::path::Path;

use crate::data::manifest::{DatasetManifest, Origin, SampleRecord, Split};
use crate::error::{Error, Result};

pub fn neu_manifest(dir: &Path, seed: u64) -> Result<DatasetManifest> {
    let mut class_dirs: Vec<(String, std::path::PathBuf)> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .map(|n| (n.to_string(), e.path()))
        })
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::invalid(format!(
            "no class subdirectories under {}",
            dir.display()
        )));
    }

    let classes: Vec<String> = class_dirs.iter().map(|(n, _)| n.clone()).collect();
    let mut manifest = DatasetManifest::new(classes, seed);
    for (class, class_dir) in &class_dirs {
        let mut files: Vec<std::path::PathBuf> = fs::read_dir(class_dir)
            .map_err(|e| Error::io(class_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
                    .unwrap_or(false)
            })
            .collect();
        files.sort();
        for path in files {
            manifest.records.push(SampleRecord {
                path,
                label: class.clone(),
                material: "steel".into(),
                split: Split::Train,
                origin: Origin::Real,
            });
        }
    }
    if manifest.records.is_empty() {
        return Err(Error::invalid(format!(
            "class directories under {} contain no pgm/png images",
            dir.display()
        )));
    }
    manifest.validate()?;
    Ok(manifest)
}
