//! The epoch loop.

use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::data::{LoadedDataset, PreprocessConfig, Split};
use crate::error::{Error, Result};
use crate::network::{backward, forward_eval, forward_train, save_checkpoint, NetworkSpec, NetworkState};
use crate::ops::{logsoftmax_nll, Mode};
use crate::train::{lr_at, rmsprop_step, OptimizerState, TrainConfig};

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    /// Absent when the manifest has no test split.
    pub test_acc: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct FitReport {
    pub logs: Vec<EpochLog>,
    pub best_test_acc: Option<f64>,
    /// True when training halted on a non-finite loss or gradient.
    pub diverged: bool,
}

/// Argmax with ties broken toward the lower class index.
pub(crate) fn argmax_low(row: &[f32]) -> usize {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn test_accuracy(
    spec: &NetworkSpec,
    state: &NetworkState,
    dataset: &LoadedDataset,
    cfg: &TrainConfig,
    pre: &PreprocessConfig,
) -> Result<Option<f64>> {
    if dataset.manifest.count_in(Split::Test) == 0 {
        return Ok(None);
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for (batch, labels) in dataset.batches(Split::Test, cfg.batch_size.max(16), pre, cfg.seed, 0)? {
        let logits = forward_eval(spec, state, &batch)?;
        let k = logits.channels();
        for (i, &label) in labels.iter().enumerate() {
            if argmax_low(&logits.data()[i * k..(i + 1) * k]) == label {
                correct += 1;
            }
        }
        total += labels.len();
    }
    Ok(Some(correct as f64 / total as f64))
}

/// Trains `state` on the dataset's train split.
///
/// Per epoch: seeded reshuffle, forward/backward/RMSProp over mini-batches,
/// then an eval-mode pass over the test split. With an output directory the
/// run writes `last.ckpt` every epoch, `best.ckpt` on test-accuracy
/// improvements, `final.ckpt` at the end, the `curves.csv` learning curve
/// and a `train-meta.txt` echo of every hyperparameter. A non-finite loss
/// or gradient halts training; earlier checkpoints stay on disk.
pub fn fit(
    spec: &NetworkSpec,
    state: &mut NetworkState,
    dataset: &LoadedDataset,
    cfg: &TrainConfig,
    pre: &PreprocessConfig,
    out_dir: Option<&Path>,
) -> Result<FitReport> {
    cfg.validate()?;
    if dataset.manifest.count_in(Split::Train) == 0 {
        return Err(Error::invalid("fit requires a non-empty train split"));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_metadata(dir, spec, cfg, pre)?;
    }

    let mut opt = OptimizerState::new();
    let mut logs: Vec<EpochLog> = Vec::new();
    let mut best_test_acc: Option<f64> = None;
    let mut diverged = false;

    'epochs: for epoch in 0..cfg.max_epochs {
        let start = Instant::now();
        let lr = lr_at(cfg, epoch);
        state.set_mode(Mode::Train);

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for (batch, labels) in dataset.batches(Split::Train, cfg.batch_size, pre, cfg.seed, epoch)? {
            let (logits, tape) = forward_train(spec, state, &batch)?;
            let (loss, grad_logits) = logsoftmax_nll(&logits, &labels)?;
            if !loss.is_finite() {
                diverged = true;
                break 'epochs;
            }
            let k = logits.channels();
            for (i, &label) in labels.iter().enumerate() {
                if argmax_low(&logits.data()[i * k..(i + 1) * k]) == label {
                    correct += 1;
                }
            }
            loss_sum += loss as f64 * labels.len() as f64;
            seen += labels.len();

            backward(spec, state, &tape, &grad_logits)?;
            match rmsprop_step(state, &mut opt, lr, cfg.weight_decay, cfg.rmsprop_alpha, cfg.rmsprop_eps) {
                Ok(()) => {}
                Err(Error::NonFiniteGradient(_)) => {
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }

        state.set_mode(Mode::Eval);
        let test_acc = test_accuracy(spec, state, dataset, cfg, pre)?;
        state.set_mode(Mode::Train);

        let log = EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            test_acc,
            seconds: start.elapsed().as_secs_f64(),
        };
        logs.push(log);

        if let Some(dir) = out_dir {
            let mut snapshot = state.clone();
            snapshot.set_mode(Mode::Eval);
            save_checkpoint(spec, &snapshot, &dir.join("last.ckpt"))?;
            if let Some(acc) = test_acc {
                if best_test_acc.map_or(true, |b| acc > b) {
                    save_checkpoint(spec, &snapshot, &dir.join("best.ckpt"))?;
                }
            }
        }
        if let Some(acc) = test_acc {
            if best_test_acc.map_or(true, |b| acc > b) {
                best_test_acc = Some(acc);
            }
        }
    }

    if let Some(dir) = out_dir {
        let mut snapshot = state.clone();
        snapshot.set_mode(Mode::Eval);
        if !diverged {
            save_checkpoint(spec, &snapshot, &dir.join("final.ckpt"))?;
        }
        write_curves(&dir.join("curves.csv"), cfg, &logs)?;
    }
    state.set_mode(Mode::Eval);

    Ok(FitReport {
        logs,
        best_test_acc,
        diverged,
    })
}

fn write_curves(path: &Path, cfg: &TrainConfig, logs: &[EpochLog]) -> Result<()> {
    let mut text = format!(
        "# rmsprop_alpha={} rmsprop_eps={} weight_decay={} batch_size={} base_lr={} lr_step_epochs={} lr_multiplier={} seed={}\n",
        cfg.rmsprop_alpha,
        cfg.rmsprop_eps,
        cfg.weight_decay,
        cfg.batch_size,
        cfg.base_lr,
        cfg.lr_step_epochs,
        cfg.lr_multiplier,
        cfg.seed
    );
    text.push_str("epoch,lr,train_loss,train_acc,test_acc,seconds\n");
    for log in logs {
        let test = log
            .test_acc
            .map(|a| format!("{a:.6}"))
            .unwrap_or_default();
        text.push_str(&format!(
            "{},{:e},{:.6},{:.6},{},{:.3}\n",
            log.epoch, log.lr, log.train_loss, log.train_acc, test, log.seconds
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_metadata(
    dir: &Path,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    pre: &PreprocessConfig,
) -> Result<()> {
    let path = dir.join("train-meta.txt");
    let text = format!(
        "# surfclass training run\n\
         network={}\n\
         fingerprint={:#018x}\n\
         input_side={}\n\
         class_count={}\n\
         batch_size={}\n\
         base_lr={}\n\
         lr_step_epochs={}\n\
         lr_multiplier={}\n\
         weight_decay={}\n\
         max_epochs={}\n\
         seed={}\n\
         rmsprop_alpha={}\n\
         rmsprop_eps={}\n\
         preprocess_target_side={}\n\
         preprocess_scale_min={}\n\
         preprocess_scale_max={}\n",
        spec.name,
        spec.fingerprint(),
        spec.input_side,
        spec.class_count,
        cfg.batch_size,
        cfg.base_lr,
        cfg.lr_step_epochs,
        cfg.lr_multiplier,
        cfg.weight_decay,
        cfg.max_epochs,
        cfg.seed,
        cfg.rmsprop_alpha,
        cfg.rmsprop_eps,
        pre.target_side,
        pre.scale_min,
        pre.scale_max
    );
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
