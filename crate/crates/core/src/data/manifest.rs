//! Line-oriented dataset manifests.
//!
//! Format (UTF-8, `#` comments allowed anywhere):
//!
//! ```text
//! # surfclass dataset manifest
//! version=1
//! classes=defect,non-defect
//! seed=7
//! images/defect_00000.pgm	defect	synthetic	train	synthetic
//! ```
//!
//! The three header lines come first, in that order; every following
//! non-comment line is one record with tab-separated fields
//! `path, label, material, split, origin`. Relative record paths resolve
//! against the manifest's directory.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Real,
    Synthetic,
    DerivedAugmentation,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Real => "real",
            Origin::Synthetic => "synthetic",
            Origin::DerivedAugmentation => "derived-augmentation",
        })
    }
}

impl FromStr for Origin {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "real" => Ok(Origin::Real),
            "synthetic" => Ok(Origin::Synthetic),
            "derived-augmentation" => Ok(Origin::DerivedAugmentation),
            other => Err(format!("unknown origin `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub path: PathBuf,
    pub label: String,
    pub material: String,
    pub split: Split,
    pub origin: Origin,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub version: u32,
    pub classes: Vec<String>,
    pub seed: u64,
    pub records: Vec<SampleRecord>,
    /// Directory relative record paths resolve against. Set on load/save;
    /// not serialized.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(classes: Vec<String>, seed: u64) -> DatasetManifest {
        DatasetManifest {
            version: MANIFEST_VERSION,
            classes,
            seed,
            records: Vec::new(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    /// Absolute path of a record.
    pub fn resolve(&self, record: &SampleRecord) -> PathBuf {
        if record.path.is_absolute() {
            record.path.clone()
        } else {
            self.base_dir.join(&record.path)
        }
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count_in(&self, split: Split) -> usize {
        self.records_in(split).count()
    }

    /// Structural invariants: known labels, no duplicate paths, non-empty
    /// class set with unique names.
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("manifest has no classes"));
        }
        let unique: BTreeSet<&String> = self.classes.iter().collect();
        if unique.len() != self.classes.len() {
            return Err(Error::invalid("manifest class names are not unique"));
        }
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if self.class_index(&r.label).is_none() {
                return Err(Error::invalid(format!(
                    "record {} has label `{}` outside the class set {:?}",
                    r.path.display(),
                    r.label,
                    self.classes
                )));
            }
            if !seen.insert(r.path.clone()) {
                return Err(Error::invalid(format!(
                    "duplicate record path {}",
                    r.path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = String::new();
        text.push_str("# surfclass dataset manifest\n");
        text.push_str(&format!("version={}\n", self.version));
        text.push_str(&format!("classes={}\n", self.classes.join(",")));
        text.push_str(&format!("seed={}\n", self.seed));
        text.push_str("# path\tlabel\tmaterial\tsplit\torigin\n");
        for r in &self.records {
            let p = r.path.to_str().ok_or_else(|| {
                Error::invalid(format!("non-utf8 record path {}", r.path.display()))
            })?;
            if p.contains('\t') || r.label.contains('\t') || r.material.contains('\t') {
                return Err(Error::invalid(format!("tab character in record `{p}`")));
            }
            text.push_str(&format!(
                "{p}\t{}\t{}\t{}\t{}\n",
                r.label, r.material, r.split, r.origin
            ));
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());

        let mut header = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::format(path, format!("missing `{key}=` header line")))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| {
                    Error::format(path, format!("expected `{key}=...`, found `{line}`"))
                })
        };

        let version: u32 = header("version")?
            .parse()
            .map_err(|_| Error::format(path, "version is not an integer"))?;
        if version != MANIFEST_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported manifest version {version}"),
            ));
        }
        let classes: Vec<String> = header("classes")?
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        let seed: u64 = header("seed")?
            .parse()
            .map_err(|_| Error::format(path, "seed is not an integer"))?;

        let mut manifest = DatasetManifest::new(classes, seed);
        manifest.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        for line in lines {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::format(
                    path,
                    format!("record needs 5 tab-separated fields, got {}: `{line}`", fields.len()),
                ));
            }
            manifest.records.push(SampleRecord {
                path: PathBuf::from(fields[0]),
                label: fields[1].to_string(),
                material: fields[2].to_string(),
                split: fields[3]
                    .parse()
                    .map_err(|e: String| Error::format(path, e))?,
                origin: fields[4]
                    .parse()
                    .map_err(|e: String| Error::format(path, e))?,
            });
        }
        manifest.validate()?;
        Ok(manifest)
    }
}
