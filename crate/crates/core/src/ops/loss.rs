//! Log-softmax + negative log-likelihood loss.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean NLL loss over the batch plus the logit gradient.
///
/// `loss_n = -(z_t - log sum_j exp(z_j))`, computed with max-subtraction so
/// large logits cannot overflow. The gradient is `(softmax - onehot) / N`,
/// i.e. the batch averaging lives here and nowhere else.
pub fn logsoftmax_nll(logits: &Tensor, targets: &[usize]) -> Result<(f32, Tensor)> {
    let [n, k, h, w] = logits.shape();
    if h != 1 || w != 1 {
        return Err(Error::ShapeMismatch {
            context: "logsoftmax_nll logits",
            expected: "(N, classes, 1, 1)".to_string(),
            actual: format!("{:?}", logits.shape()),
        });
    }
    if targets.len() != n {
        return Err(Error::ShapeMismatch {
            context: "logsoftmax_nll targets",
            expected: format!("{n} targets"),
            actual: format!("{}", targets.len()),
        });
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::invalid(format!(
            "target class {bad} out of range for {k} classes"
        )));
    }

    let mut grad = Tensor::zeros(n, k, 1, 1);
    let inv_n = 1.0f32 / n as f32;
    let mut total = 0.0f64;
    for i in 0..n {
        let row = &logits.data()[i * k..(i + 1) * k];
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for &z in row {
            sum += (z - max).exp();
        }
        let lse = max + sum.ln();
        total += (lse - row[targets[i]]) as f64;

        let g = &mut grad.data_mut()[i * k..(i + 1) * k];
        for (j, gv) in g.iter_mut().enumerate() {
            let softmax = (row[j] - max).exp() / sum;
            let onehot = if j == targets[i] { 1.0 } else { 0.0 };
            *gv = (softmax - onehot) * inv_n;
        }
    }

    Ok(((total / n as f64) as f32, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn uniform_binary_case_is_ln2() {
        let logits = Tensor::from_vec([1, 2, 1, 1], vec![0.0, 0.0]).unwrap();
        let (loss, _) = logsoftmax_nll(&logits, &[0]).unwrap();
        assert!((loss - std::f32::consts::LN_2).abs() < 1e-6, "loss {loss}");
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let logits = Tensor::from_vec([1, 2, 1, 1], vec![1000.0, 0.0]).unwrap();
        let (loss, grad) = logsoftmax_nll(&logits, &[0]).unwrap();
        assert!(loss.is_finite());
        assert!(loss.abs() < 1e-6, "loss {loss}");
        assert!(grad.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn per_sample_gradient_sums_to_zero() {
        let mut rng = crate::rng::derive(9, 0xA0);
        let logits = Tensor::from_fn([4, 5, 1, 1], || rng.gen_range(-3.0..3.0));
        let targets = [0usize, 3, 1, 4];
        let (_, grad) = logsoftmax_nll(&logits, &targets).unwrap();
        for i in 0..4 {
            let s: f32 = grad.data()[i * 5..(i + 1) * 5].iter().sum();
            assert!(s.abs() < 1e-6, "sample {i} grad sum {s}");
        }
    }

    #[test]
    fn target_out_of_range_rejected() {
        let logits = Tensor::zeros(1, 2, 1, 1);
        assert!(logsoftmax_nll(&logits, &[2]).is_err());
        assert!(logsoftmax_nll(&logits, &[0, 1]).is_err());
    }
}
