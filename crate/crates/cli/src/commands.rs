//! The six subcommands.

use std::fs;

use anyhow::{bail, Context, Result};
use rand::Rng;

use surfclass::data::{
    aggregate, balance, cleanse, offline_rotations, write_rejection_report,
    write_shortfall_report, DatasetManifest, GrayImage, LoadedDataset,
};
use surfclass::eval::{
    benchmark_inference, crossvalidate, evaluate, write_latency_report, LatencyReport,
};
use surfclass::network::{forward_eval, load_checkpoint};
use surfclass::synth::generate_dataset;
use surfclass::train::fit;

use crate::config::RunConfig;

/// Generates a synthetic corpus plus manifest under the output directory.
///
/// With `datagen_test_*` counts the corpus gains a held-out test split,
/// generated under a derived seed into `test/`, and the manifest at the
/// output root covers both splits.
pub fn cmd_datagen(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let (n_defect, n_nondefect) = cfg.datagen_counts()?;
    let (t_defect, t_nondefect) = cfg.datagen_test_counts()?;
    let gen = cfg.generator()?;
    let seed = cfg.seed()?;
    cfg.echo_resolved(&out)?;

    if t_defect + t_nondefect == 0 {
        let manifest = generate_dataset(n_defect, n_nondefect, seed, &out, &gen)?;
        println!(
            "datagen: wrote {} images ({n_defect} defect, {n_nondefect} non-defect) under {}",
            manifest.records.len(),
            out.display()
        );
        return Ok(());
    }

    use surfclass::data::Split;
    if gen.split == Split::Test {
        bail!("datagen_split = test cannot be combined with datagen_test_* counts");
    }
    let train = generate_dataset(n_defect, n_nondefect, seed, &out.join("train"), &gen)?;
    let test_gen = surfclass::synth::GeneratorConfig {
        split: Split::Test,
        ..gen
    };
    let test_seed = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let test = generate_dataset(t_defect, t_nondefect, test_seed, &out.join("test"), &test_gen)?;

    let mut merged = DatasetManifest::new(train.classes.clone(), seed);
    merged.base_dir = out.clone();
    for (manifest, prefix) in [(&train, "train"), (&test, "test")] {
        for record in &manifest.records {
            let mut r = record.clone();
            r.path = std::path::Path::new(prefix).join(&record.path);
            merged.records.push(r);
        }
    }
    merged.save(&out.join("manifest.txt"))?;
    println!(
        "datagen: wrote {} train + {} test images under {}",
        train.records.len(),
        test.records.len(),
        out.display()
    );
    Ok(())
}

/// Aggregate -> cleanse -> balance (-> offline rotations), in that order.
pub fn cmd_prep(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let sources = cfg.sources()?;
    let seed = cfg.seed()?;
    cfg.echo_resolved(&out)?;

    let mut classes: Vec<String> = Vec::new();
    for s in &sources {
        if !classes.contains(&s.label) {
            classes.push(s.label.clone());
        }
    }

    let (manifest, log) = aggregate(&sources, &classes, seed, &out.join("converted"))?;
    println!(
        "prep: aggregated {} records ({} converted, {} skipped, {} duplicates)",
        manifest.records.len(),
        log.converted.len(),
        log.skipped.len(),
        log.duplicates.len()
    );
    for (path, reason) in &log.skipped {
        println!("prep: skipped {}: {reason}", path.display());
    }

    let (manifest, rejections) = cleanse(&manifest, &cfg.cleanse_thresholds()?)?;
    write_rejection_report(&out.join("cleanse-report.txt"), &rejections)?;
    println!(
        "prep: cleansing kept {} records, rejected {}",
        manifest.records.len(),
        rejections.len()
    );

    let manifest = match cfg.balance_quota()? {
        Some(quota) => {
            let (balanced, shortfalls) = balance(&manifest, quota, seed)?;
            write_shortfall_report(&out.join("balance-report.txt"), &shortfalls)?;
            println!(
                "prep: balanced to {} records ({} undersupplied cells)",
                balanced.records.len(),
                shortfalls.len()
            );
            balanced
        }
        None => manifest,
    };

    let manifest = match cfg.rotation_angles()? {
        Some(angles) if !angles.is_empty() => {
            let rotated = offline_rotations(&manifest, &angles, &out.join("rotations"))?;
            println!(
                "prep: offline rotations added {} records",
                rotated.records.len() - manifest.records.len()
            );
            rotated
        }
        _ => manifest,
    };

    let manifest_path = out.join("manifest.txt");
    manifest.save(&manifest_path)?;
    println!("prep: wrote {}", manifest_path.display());
    Ok(())
}

/// Trains the configured network on a manifest's train split.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let manifest_path = cfg.train_manifest()?;
    if !manifest_path.exists() {
        bail!("dataset manifest not found: {}", manifest_path.display());
    }
    cfg.echo_resolved(&out)?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    let dataset = LoadedDataset::load(manifest)?;
    let train_cfg = cfg.train_config()?;
    let pre = cfg.preprocess()?;
    let (spec, mut state) = cfg.build_network(train_cfg.seed)?;

    let report = fit(&spec, &mut state, &dataset, &train_cfg, &pre, Some(&out))?;
    if report.diverged {
        bail!("training diverged; last good checkpoint kept in {}", out.display());
    }
    let last = report.logs.last().context("no epochs ran")?;
    println!(
        "train: {} epochs, final train_acc {:.4}, final test_acc {}, best test_acc {}",
        report.logs.len(),
        last.train_acc,
        last.test_acc
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        report
            .best_test_acc
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "n/a".into())
    );
    println!("train: checkpoints and curves.csv under {}", out.display());
    Ok(())
}

/// Evaluates a checkpoint on a manifest split.
pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let manifest_path = cfg.eval_manifest()?;
    if !manifest_path.exists() {
        bail!("dataset manifest not found: {}", manifest_path.display());
    }
    let checkpoint = cfg.checkpoint()?;
    if !checkpoint.exists() {
        bail!("checkpoint not found: {}", checkpoint.display());
    }
    cfg.echo_resolved(&out)?;

    let manifest = DatasetManifest::load(&manifest_path)?;
    let dataset = LoadedDataset::load(manifest)?;
    let (spec, _) = cfg.build_network(cfg.seed()?)?;
    let state = load_checkpoint(&spec, &checkpoint)?;
    let split = cfg.eval_split()?;

    let (matrix, metrics) = evaluate(&spec, &state, &dataset, split, 32)?;
    let classes = &dataset.manifest.classes;
    fs::write(out.join("metrics.txt"), metrics.to_text(classes))
        .context("cannot write metrics.txt")?;
    fs::write(out.join("confusion.txt"), matrix.dump_grid())
        .context("cannot write confusion.txt")?;
    let csv = format!(
        "accuracy,precision,recall,specificity,samples\n{:.6},{},{},{},{}\n",
        metrics.accuracy,
        metrics.precision.map(|v| format!("{v:.6}")).unwrap_or_default(),
        metrics.recall.map(|v| format!("{v:.6}")).unwrap_or_default(),
        metrics.specificity.map(|v| format!("{v:.6}")).unwrap_or_default(),
        metrics.samples
    );
    fs::write(out.join("metrics.csv"), csv).context("cannot write metrics.csv")?;
    println!(
        "eval: split {split}, {} samples, accuracy {:.4}",
        metrics.samples, metrics.accuracy
    );
    Ok(())
}

/// Stratified k-fold cross-validation with a fresh network per fold.
pub fn cmd_crossval(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let manifest_path = cfg.train_manifest()?;
    if !manifest_path.exists() {
        bail!("dataset manifest not found: {}", manifest_path.display());
    }
    cfg.echo_resolved(&out)?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    let train_cfg = cfg.train_config()?;
    let pre = cfg.preprocess()?;
    let k = cfg.kfold()?;

    let report = crossvalidate(
        |_fold, fold_seed| {
            cfg.build_network(fold_seed)
                .map_err(|e| surfclass::Error::InvalidArgument(e.to_string()))
        },
        &manifest,
        &train_cfg,
        &pre,
        k,
    )?;
    fs::write(out.join("crossval.txt"), report.to_text(&manifest.classes))
        .context("cannot write crossval.txt")?;
    println!("crossval: k={k}, mean top-1 {:.4}", report.mean_top1);
    for fold in &report.folds {
        println!("crossval: fold {} top-1 {:.4}", fold.fold, fold.top1);
    }
    Ok(())
}

/// Latency benchmark for the configured networks at the configured side.
pub fn cmd_bench(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    cfg.echo_resolved(&out)?;
    let seed = cfg.seed()?;
    let side = cfg.input_side()?;

    // One deterministic probe image, slightly larger than the input so the
    // timed path includes a real resize + crop.
    let mut rng = surfclass::rng::derive(seed, 0xBE);
    let (w, h) = (side * 5 / 4, side * 9 / 8);
    let image = GrayImage::from_pixels(w, h, (0..w * h).map(|_| rng.gen()).collect())?;

    let mut reports: Vec<LatencyReport> = Vec::new();
    for name in cfg.bench_networks()? {
        let mut one = cfg.clone_with_network(&name)?;
        one.apply_overrides(None, None, None);
        let (spec, mut state) = one.build_network(seed)?;
        state.set_mode(surfclass::ops::Mode::Eval);
        // Warm the running statistics access path once outside timing.
        let probe = surfclass::data::test_preprocess(&image, side);
        forward_eval(&spec, &state, &probe)?;
        let report = benchmark_inference(&spec, &state, &image, 1)?;
        println!(
            "bench: {name} mean {:.3} ms, min {:.3} ms (batch 1, {} runs)",
            report.mean_ms,
            report.min_ms,
            report.runs_ms.len()
        );
        reports.push(report);
    }
    write_latency_report(&out.join("latency.txt"), &reports)?;
    println!("bench: wrote {}", out.join("latency.txt").display());
    Ok(())
}
