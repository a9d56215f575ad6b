//! Single-image inference latency benchmark.
//!
//! Protocol: batch size 1, at least three warm-up forwards, then ten timed
//! runs. One timed run covers test preprocessing of an already-decoded
//! image plus the forward pass; disk I/O is outside the measurement. The
//! benchmark executes on a dedicated single-threaded pool so the number is
//! a per-image latency, not a throughput.

use std::path::Path;
use std::time::Instant;

use crate::data::{test_preprocess, GrayImage};
use crate::error::{Error, Result};
use crate::network::{forward_eval, NetworkSpec, NetworkState};
use crate::ops::Mode;

pub const LATENCY_RUNS: usize = 10;
pub const LATENCY_WARMUP: usize = 3;

#[derive(Debug, Clone)]
pub struct LatencyReport {
    pub network: String,
    pub input_side: usize,
    pub batch_size: usize,
    pub warmup_runs: usize,
    /// Per-run milliseconds, exactly [`LATENCY_RUNS`] entries.
    pub runs_ms: Vec<f64>,
    pub mean_ms: f64,
    pub min_ms: f64,
}

/// Times ten single-image forwards (preprocessed tensor in, logits out).
///
/// The batch size is part of the protocol and must be 1; the state must be
/// in eval mode.
pub fn benchmark_inference(
    spec: &NetworkSpec,
    state: &NetworkState,
    image: &GrayImage,
    batch_size: usize,
) -> Result<LatencyReport> {
    if batch_size != 1 {
        return Err(Error::invalid(format!(
            "latency protocol requires batch size 1, got {batch_size}"
        )));
    }
    if state.mode != Mode::Eval {
        return Err(Error::invalid("benchmark requires eval mode"));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::invalid(format!("could not build benchmark pool: {e}")))?;

    pool.install(|| -> Result<LatencyReport> {
        for _ in 0..LATENCY_WARMUP {
            let tensor = test_preprocess(image, spec.input_side);
            forward_eval(spec, state, &tensor)?;
        }
        let mut runs_ms = Vec::with_capacity(LATENCY_RUNS);
        for _ in 0..LATENCY_RUNS {
            let start = Instant::now();
            let tensor = test_preprocess(image, spec.input_side);
            let logits = forward_eval(spec, state, &tensor)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(logits);
            runs_ms.push(elapsed);
        }
        let mean_ms = runs_ms.iter().sum::<f64>() / runs_ms.len() as f64;
        let min_ms = runs_ms.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(LatencyReport {
            network: spec.name.clone(),
            input_side: spec.input_side,
            batch_size,
            warmup_runs: LATENCY_WARMUP,
            runs_ms,
            mean_ms,
            min_ms,
        })
    })
}

/// Plain-text report; the header states the measurement boundary.
pub fn write_latency_report(path: &Path, reports: &[LatencyReport]) -> Result<()> {
    let mut text = String::from(
        "# surfclass latency report\n\
         # scope: test-preprocess of a decoded image + forward pass; disk i/o excluded\n\
         # batch_size=1, single-threaded, mean over 10 timed runs after 3 warm-ups\n\
         network,input_side,mean_ms,min_ms,runs_ms\n",
    );
    for r in reports {
        let runs: Vec<String> = r.runs_ms.iter().map(|v| format!("{v:.4}")).collect();
        text.push_str(&format!(
            "{},{},{:.4},{:.4},{}\n",
            r.network,
            r.input_side,
            r.mean_ms,
            r.min_ms,
            runs.join(";")
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_fastinf;
    use rand::Rng;

    fn test_image(side: usize) -> GrayImage {
        let mut rng = crate::rng::derive(3, 0x61);
        GrayImage::from_pixels(side, side, (0..side * side).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn report_has_ten_runs_and_consistent_stats() {
        let (spec, mut state) = build_fastinf(&[2, 2, 4], 32, 2, 1).unwrap();
        state.set_mode(Mode::Eval);
        let img = test_image(48);
        let report = benchmark_inference(&spec, &state, &img, 1).unwrap();
        assert_eq!(report.runs_ms.len(), LATENCY_RUNS);
        assert!(report.min_ms <= report.mean_ms);
        assert!(report.runs_ms.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn repeated_benchmarks_agree_within_a_quarter() {
        // Back-to-back runs on the same network; the mean of ten timed
        // forwards is stable to well under 25% on an otherwise idle box.
        let (spec, mut state) = crate::network::build_fastinf(&[4, 4, 64], 64, 2, 2).unwrap();
        state.set_mode(Mode::Eval);
        let img = test_image(80);
        let a = benchmark_inference(&spec, &state, &img, 1).unwrap();
        let b = benchmark_inference(&spec, &state, &img, 1).unwrap();
        let ratio = (a.mean_ms - b.mean_ms).abs() / a.mean_ms.max(b.mean_ms);
        assert!(
            ratio <= 0.25,
            "consecutive means {:.4} vs {:.4} ms differ by {:.0}%",
            a.mean_ms,
            b.mean_ms,
            ratio * 100.0
        );
    }

    #[test]
    fn non_unit_batch_rejected() {
        let (spec, mut state) = build_fastinf(&[2, 2, 4], 32, 2, 1).unwrap();
        state.set_mode(Mode::Eval);
        let img = test_image(32);
        assert!(benchmark_inference(&spec, &state, &img, 2).is_err());
        assert!(benchmark_inference(&spec, &state, &img, 0).is_err());
    }

    #[test]
    fn train_mode_rejected() {
        let (spec, state) = build_fastinf(&[2, 2, 4], 32, 2, 1).unwrap();
        let img = test_image(32);
        assert!(benchmark_inference(&spec, &state, &img, 1).is_err());
    }
}
