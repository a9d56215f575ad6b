//! Stratified k-fold cross-validation.

use rand::seq::SliceRandom;

use crate::data::{DatasetManifest, LoadedDataset, PreprocessConfig, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::network::{NetworkSpec, NetworkState};
use crate::rng;
use crate::train::{fit, TrainConfig};

/// Splits the manifest into k stratified (train, test) pairs.
///
/// Records are grouped per class, shuffled under a seed derived per class,
/// and dealt round-robin, so per-class fold sizes differ by at most one.
/// Every record lands in exactly one test fold.
pub fn kfold_split(
    manifest: &DatasetManifest,
    k: usize,
    seed: u64,
) -> Result<Vec<(DatasetManifest, DatasetManifest)>> {
    if k < 2 {
        return Err(Error::invalid(format!(
            "k-fold needs k >= 2 (k={k} leaves no held-out data)"
        )));
    }
    manifest.validate()?;
    if manifest.records.len() < k {
        return Err(Error::invalid(format!(
            "k={k} folds need at least {k} records, manifest has {}",
            manifest.records.len()
        )));
    }

    // fold_of[i] = fold index of record i.
    let mut fold_of = vec![0usize; manifest.records.len()];
    for (class_idx, class) in manifest.classes.iter().enumerate() {
        let mut members: Vec<usize> = manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| &r.label == class)
            .map(|(i, _)| i)
            .collect();
        let mut rng = rng::derive_indexed(seed, rng::stream::FOLD, class_idx as u64);
        members.shuffle(&mut rng);
        for (j, &record_idx) in members.iter().enumerate() {
            fold_of[record_idx] = j % k;
        }
    }

    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let mut train = manifest.clone();
        let mut test = manifest.clone();
        train.records.clear();
        test.records.clear();
        for (i, record) in manifest.records.iter().enumerate() {
            let mut r = record.clone();
            if fold_of[i] == f {
                r.split = Split::Test;
                test.records.push(r);
            } else {
                r.split = Split::Train;
                train.records.push(r);
            }
        }
        folds.push((train, test));
    }
    Ok(folds)
}

#[derive(Debug, Clone)]
pub struct FoldReport {
    pub fold: usize,
    pub top1: f64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct CrossvalReport {
    pub k: usize,
    pub mean_top1: f64,
    pub folds: Vec<FoldReport>,
}

impl CrossvalReport {
    pub fn to_text(&self, classes: &[String]) -> String {
        let mut out = format!(
            "# surfclass cross-validation report\nk={}\nmean_top1={:.6}\n",
            self.k, self.mean_top1
        );
        for fold in &self.folds {
            out.push_str(&format!("fold[{}].top1={:.6}\n", fold.fold, fold.top1));
        }
        for fold in &self.folds {
            out.push('\n');
            out.push_str(&format!("# fold {}\n", fold.fold));
            out.push_str(&fold.metrics.to_text(classes));
        }
        out
    }
}

/// Full cross-validation: a freshly initialized network per fold, trained
/// on the fold's train split and scored on its test split.
///
/// `build` receives the fold index and a fold-derived seed and must return
/// a fresh (spec, state) pair.
pub fn crossvalidate(
    build: impl Fn(usize, u64) -> Result<(NetworkSpec, NetworkState)>,
    manifest: &DatasetManifest,
    train_cfg: &TrainConfig,
    pre: &PreprocessConfig,
    k: usize,
) -> Result<CrossvalReport> {
    let folds = kfold_split(manifest, k, train_cfg.seed)?;
    let mut reports = Vec::with_capacity(k);
    let mut sum = 0.0f64;
    for (f, (train_manifest, test_manifest)) in folds.into_iter().enumerate() {
        let mut merged = train_manifest;
        merged.records.extend(test_manifest.records);
        let dataset = LoadedDataset::load(merged)?;

        let fold_seed = train_cfg.seed ^ (0x9e37_79b9 + f as u64);
        let (spec, mut state) = build(f, fold_seed)?;
        let cfg = TrainConfig {
            seed: fold_seed,
            ..train_cfg.clone()
        };
        fit(&spec, &mut state, &dataset, &cfg, pre, None)?;
        let (_, metrics) = evaluate(&spec, &state, &dataset, Split::Test, 32)?;
        sum += metrics.accuracy;
        reports.push(FoldReport {
            fold: f,
            top1: metrics.accuracy,
            metrics,
        });
    }
    Ok(CrossvalReport {
        k,
        mean_top1: sum / k as f64,
        folds: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Origin, SampleRecord};
    use std::collections::BTreeSet;
    use std::path::PathBuf;

    fn mock_manifest(per_class: usize, classes: &[&str]) -> DatasetManifest {
        let mut m = DatasetManifest::new(classes.iter().map(|s| s.to_string()).collect(), 7);
        for class in classes {
            for i in 0..per_class {
                m.records.push(SampleRecord {
                    path: PathBuf::from(format!("{class}/{i}.pgm")),
                    label: class.to_string(),
                    material: "steel".into(),
                    split: Split::Train,
                    origin: Origin::Real,
                });
            }
        }
        m
    }

    #[test]
    fn neu_shape_folds_have_exact_test_counts() {
        let classes = ["crazing", "inclusion", "patches", "pitted", "rolled", "scratches"];
        let manifest = mock_manifest(300, &classes);
        let folds = kfold_split(&manifest, 10, 42).unwrap();
        assert_eq!(folds.len(), 10);
        for (train, test) in &folds {
            assert_eq!(test.records.len(), 180);
            assert_eq!(train.records.len(), 1620);
            for class in &classes {
                let count = test.records.iter().filter(|r| &r.label == class).count();
                assert_eq!(count, 30, "class {class}");
            }
        }
    }

    #[test]
    fn folds_partition_the_manifest() {
        let manifest = mock_manifest(25, &["defect", "non-defect"]);
        let folds = kfold_split(&manifest, 4, 3).unwrap();
        let mut seen: BTreeSet<PathBuf> = BTreeSet::new();
        for (_, test) in &folds {
            for r in &test.records {
                assert!(seen.insert(r.path.clone()), "{} in two folds", r.path.display());
            }
        }
        assert_eq!(seen.len(), manifest.records.len());
        // Stratification: per-class fold counts differ by at most one.
        for (_, test) in &folds {
            let d = test.records.iter().filter(|r| r.label == "defect").count();
            let n = test.records.iter().filter(|r| r.label == "non-defect").count();
            assert!(d.abs_diff(7) <= 1, "defect count {d}");
            assert!(n.abs_diff(7) <= 1, "non-defect count {n}");
        }
    }

    #[test]
    fn k_of_one_rejected() {
        let manifest = mock_manifest(10, &["defect", "non-defect"]);
        assert!(kfold_split(&manifest, 1, 3).is_err());
    }

    #[test]
    fn identical_behavior_classifier_means_equal_folds() {
        // A zero-weight network predicts class 0 for every sample; with
        // stratified folds every fold then scores exactly the class-0 share,
        // so the mean equals each fold.
        let dir = tempfile::tempdir().unwrap();
        let manifest = crate::synth::generate_dataset(
            12,
            12,
            5,
            dir.path(),
            &crate::synth::GeneratorConfig::for_side(32),
        )
        .unwrap();
        let cfg = TrainConfig {
            max_epochs: 0,
            batch_size: 4,
            seed: 6,
            ..TrainConfig::default()
        };
        let pre = PreprocessConfig::for_side(32);
        let report = crossvalidate(
            |_fold, fold_seed| {
                let (spec, mut state) =
                    crate::network::build_surfnet(&[2; 9], 32, 2, fold_seed)?;
                state.fc.weights.data_mut().iter_mut().for_each(|v| *v = 0.0);
                state.fc.bias.values.iter_mut().for_each(|v| *v = 0.0);
                Ok((spec, state))
            },
            &manifest,
            &cfg,
            &pre,
            4,
        )
        .unwrap();
        for fold in &report.folds {
            assert_eq!(fold.top1, report.mean_top1, "fold {}", fold.fold);
            assert_eq!(fold.top1, 0.5);
        }
    }

    #[test]
    fn separable_toy_corpus_reaches_high_top1() {
        // Brightness decides the class: dark textures vs bright textures
        // with a wide margin. Cross-validation must essentially solve it.
        use crate::data::GrayImage;
        use crate::data::{Origin, SampleRecord};
        let dir = tempfile::tempdir().unwrap();
        let mut manifest =
            DatasetManifest::new(vec!["defect".into(), "non-defect".into()], 7);
        manifest.base_dir = dir.path().to_path_buf();
        let mut rng = crate::rng::derive(8, 0x90);
        use rand::Rng;
        for i in 0..60 {
            let dark = i % 2 == 0;
            let base = if dark { 60.0 } else { 190.0 };
            let pixels: Vec<u8> = (0..32 * 32)
                .map(|_| (base + rng.gen_range(-12.0..12.0)) as u8)
                .collect();
            let img = GrayImage::from_pixels(32, 32, pixels).unwrap();
            let path = dir.path().join(format!("img_{i:03}.pgm"));
            img.save_pgm(&path).unwrap();
            manifest.records.push(SampleRecord {
                path,
                label: if dark { "defect" } else { "non-defect" }.into(),
                material: "toy".into(),
                split: Split::Train,
                origin: Origin::Synthetic,
            });
        }
        let cfg = TrainConfig {
            max_epochs: 8,
            batch_size: 5,
            base_lr: 1e-3,
            weight_decay: 0.0,
            seed: 9,
            ..TrainConfig::default()
        };
        let pre = PreprocessConfig::for_side(32);
        let report = crossvalidate(
            |_fold, fold_seed| {
                crate::network::build_surfnet(&[4, 4, 8, 8, 16, 16, 16, 16, 16], 32, 2, fold_seed)
            },
            &manifest,
            &cfg,
            &pre,
            3,
        )
        .unwrap();
        assert!(
            report.mean_top1 >= 0.99,
            "separable corpus should solve, got {}",
            report.mean_top1
        );
    }

    #[test]
    fn fold_assignment_is_seed_deterministic() {
        let manifest = mock_manifest(30, &["defect", "non-defect"]);
        let a = kfold_split(&manifest, 5, 9).unwrap();
        let b = kfold_split(&manifest, 5, 9).unwrap();
        for ((ta, sa), (tb, sb)) in a.iter().zip(b.iter()) {
            assert_eq!(ta.records, tb.records);
            assert_eq!(sa.records, sb.records);
        }
        let c = kfold_split(&manifest, 5, 10).unwrap();
        assert_ne!(a[0].1.records, c[0].1.records);
    }
}
