//! Classification metrics, the cross-validation harness and the inference
//! latency benchmark.

mod kfold;
mod latency;

pub use kfold::{crossvalidate, kfold_split, CrossvalReport, FoldReport};
pub use latency::{
    benchmark_inference, write_latency_report, LatencyReport, LATENCY_RUNS, LATENCY_WARMUP,
};

use crate::data::{LoadedDataset, Split};
use crate::error::{Error, Result};
use crate::network::{forward_eval, NetworkSpec, NetworkState};
use crate::ops::Mode;

/// K x K prediction counts; `count(actual, predicted)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> ConfusionMatrix {
        assert!(classes >= 2, "confusion matrix needs >= 2 classes");
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Binary matrix from the four counts, positive class at index 0.
    pub fn from_binary(tp: u64, fn_: u64, tn: u64, fp: u64) -> ConfusionMatrix {
        let mut m = ConfusionMatrix::new(2);
        m.counts = vec![tp, fn_, fp, tn];
        m
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.counts[actual * self.classes + predicted] += 1;
    }

    pub fn count(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..self.classes).map(|c| self.count(c, c)).sum()
    }

    /// One-vs-rest counts for the given positive class: (TP, FN, TN, FP).
    pub fn binary_counts(&self, positive: usize) -> (u64, u64, u64, u64) {
        let tp = self.count(positive, positive);
        let fn_ = (0..self.classes)
            .filter(|&p| p != positive)
            .map(|p| self.count(positive, p))
            .sum();
        let fp = (0..self.classes)
            .filter(|&a| a != positive)
            .map(|a| self.count(a, positive))
            .sum();
        let tn = self.total() - tp - fn_ - fp;
        (tp, fn_, tn, fp)
    }

    /// Integer grid, one row of counts per actual class.
    pub fn dump_grid(&self) -> String {
        let mut out = String::new();
        for a in 0..self.classes {
            let row: Vec<String> = (0..self.classes)
                .map(|p| self.count(a, p).to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// The derived metrics. Ratios with a zero denominator are reported as
/// absent rather than coerced to 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub samples: u64,
    /// Top-1 accuracy: diagonal / total.
    pub accuracy: f64,
    /// Per-class accuracy (the recall of each class).
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Index of the positive class the binary ratios refer to.
    pub positive_class: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
}

impl MetricsReport {
    pub fn from_confusion(m: &ConfusionMatrix, positive: usize) -> Result<MetricsReport> {
        let total = m.total();
        if total == 0 {
            return Err(Error::invalid("metrics need at least one sample"));
        }
        if positive >= m.classes() {
            return Err(Error::invalid(format!(
                "positive class {positive} out of range for {} classes",
                m.classes()
            )));
        }
        let (tp, fn_, tn, fp) = m.binary_counts(positive);
        let per_class_accuracy = (0..m.classes())
            .map(|c| {
                let row: u64 = (0..m.classes()).map(|p| m.count(c, p)).sum();
                ratio(m.count(c, c), row)
            })
            .collect();
        Ok(MetricsReport {
            samples: total,
            accuracy: m.diagonal() as f64 / total as f64,
            per_class_accuracy,
            positive_class: positive,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
        })
    }

    /// Plain-text rendering; absent ratios print as `undefined`.
    pub fn to_text(&self, classes: &[String]) -> String {
        let opt = |v: Option<f64>| {
            v.map(|x| format!("{x:.6}"))
                .unwrap_or_else(|| "undefined".into())
        };
        let mut out = String::from("# surfclass metrics report\n");
        out.push_str("# per-class accuracy is that class's recall\n");
        out.push_str(&format!("samples={}\n", self.samples));
        out.push_str(&format!("accuracy={:.6}\n", self.accuracy));
        out.push_str(&format!(
            "positive_class={}\n",
            classes
                .get(self.positive_class)
                .map(String::as_str)
                .unwrap_or("?")
        ));
        out.push_str(&format!("precision={}\n", opt(self.precision)));
        out.push_str(&format!("recall={}\n", opt(self.recall)));
        out.push_str(&format!("specificity={}\n", opt(self.specificity)));
        for (i, acc) in self.per_class_accuracy.iter().enumerate() {
            out.push_str(&format!(
                "class_accuracy[{}]={}\n",
                classes.get(i).map(String::as_str).unwrap_or("?"),
                opt(*acc)
            ));
        }
        out
    }
}

/// Runs the test protocol over one split and derives the metrics.
///
/// Requires eval mode (batch statistics must stay frozen); predictions are
/// argmax with ties toward the lower class index. The positive class is
/// `defect` when present, else class 0.
pub fn evaluate(
    spec: &NetworkSpec,
    state: &NetworkState,
    dataset: &LoadedDataset,
    split: Split,
    batch_size: usize,
) -> Result<(ConfusionMatrix, MetricsReport)> {
    if state.mode != Mode::Eval {
        return Err(Error::invalid("evaluate requires eval mode"));
    }
    let classes = dataset.manifest.classes.len();
    if dataset.manifest.count_in(split) == 0 {
        return Err(Error::invalid(format!("no records in split {split}")));
    }
    let mut matrix = ConfusionMatrix::new(classes);
    for (batch, labels) in dataset.eval_batches(split, batch_size.max(1), spec.input_side)? {
        let logits = forward_eval(spec, state, &batch)?;
        let k = logits.channels();
        for (i, &label) in labels.iter().enumerate() {
            let pred = crate::train::argmax_low(&logits.data()[i * k..(i + 1) * k]);
            matrix.record(label, pred);
        }
    }
    let positive = dataset
        .manifest
        .class_index(crate::synth::DEFECT_CLASS)
        .unwrap_or(0);
    let report = MetricsReport::from_confusion(&matrix, positive)?;
    Ok((matrix, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_arithmetic_example() {
        let m = ConfusionMatrix::from_binary(9, 1, 8, 2);
        let r = MetricsReport::from_confusion(&m, 0).unwrap();
        assert!((r.accuracy - 0.85).abs() < 1e-12);
        assert!((r.precision.unwrap() - 9.0 / 11.0).abs() < 1e-12);
        assert!((r.recall.unwrap() - 0.9).abs() < 1e-12);
        assert!((r.specificity.unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_give_ones() {
        let m = ConfusionMatrix::from_binary(10, 0, 15, 0);
        let r = MetricsReport::from_confusion(&m, 0).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.precision, Some(1.0));
        assert_eq!(r.recall, Some(1.0));
        assert_eq!(r.specificity, Some(1.0));
    }

    #[test]
    fn zero_denominators_are_absent_not_zero() {
        // No positive samples at all: recall undefined.
        let m = ConfusionMatrix::from_binary(0, 0, 20, 0);
        let r = MetricsReport::from_confusion(&m, 0).unwrap();
        assert_eq!(r.recall, None);
        assert_eq!(r.precision, None);
        assert_eq!(r.specificity, Some(1.0));
        let text = r.to_text(&["defect".into(), "non-defect".into()]);
        assert!(text.contains("recall=undefined"));
    }

    #[test]
    fn per_class_accuracy_equals_recall_and_specificity() {
        let m = ConfusionMatrix::from_binary(37, 13, 81, 19);
        let r = MetricsReport::from_confusion(&m, 0).unwrap();
        assert_eq!(r.per_class_accuracy[0], r.recall);
        assert_eq!(r.per_class_accuracy[1], r.specificity);
    }

    #[test]
    fn multiclass_counts() {
        let mut m = ConfusionMatrix::new(3);
        m.record(0, 0);
        m.record(0, 2);
        m.record(1, 1);
        m.record(2, 2);
        assert_eq!(m.total(), 4);
        assert_eq!(m.diagonal(), 3);
        let (tp, fn_, tn, fp) = m.binary_counts(2);
        assert_eq!((tp, fn_, tn, fp), (1, 0, 2, 1));
        assert_eq!(m.dump_grid(), "1 0 1\n0 1 0\n0 0 1\n");
    }
}
