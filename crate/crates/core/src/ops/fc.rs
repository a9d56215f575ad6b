//! Fully-connected classification head.

use crate::error::{Error, Result};
use crate::matmul::{gemm_nt_acc, gemm_tn};
use crate::tensor::{Param, Tensor};

/// Linear map from a flattened feature map to class logits.
#[derive(Debug, Clone)]
pub struct FcParams {
    pub in_features: usize,
    pub out_features: usize,
    /// Shape (out_features, in_features, 1, 1); row-major (out x in) matrix.
    pub weights: Tensor,
    pub bias: Param,
}

impl FcParams {
    pub fn new(in_features: usize, out_features: usize) -> Result<FcParams> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::invalid("fc feature counts must be >= 1"));
        }
        Ok(FcParams {
            in_features,
            out_features,
            weights: Tensor::zeros(out_features, in_features, 1, 1),
            bias: Param::filled(out_features, 0.0),
        })
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.sample_len() != self.in_features {
            return Err(Error::ShapeMismatch {
                context: "fc input features",
                expected: format!("{} flattened features per sample", self.in_features),
                actual: format!(
                    "{:?} ({} per sample)",
                    input.shape(),
                    input.sample_len()
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct FcGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f32>,
}

/// `logits[n][k] = bias[k] + sum_f input[n][f] * W[k][f]`.
///
/// The input may have any (C,H,W) factorization; only the flattened
/// per-sample length must match.
pub fn fc_forward(input: &Tensor, params: &FcParams) -> Result<Tensor> {
    params.check_input(input)?;
    let n = input.batch();
    let k = params.out_features;
    let f = params.in_features;
    let mut logits = Tensor::zeros(n, k, 1, 1);
    let w = params.weights.data();
    let out = logits.data_mut();
    for i in 0..n {
        let x = input.sample(i);
        for (j, o) in out[i * k..(i + 1) * k].iter_mut().enumerate() {
            let row = &w[j * f..(j + 1) * f];
            let mut acc = 0.0f32;
            for (&xv, &wv) in x.iter().zip(row.iter()) {
                acc += xv * wv;
            }
            *o = acc + params.bias.values[j];
        }
    }
    Ok(logits)
}

/// Gradients for the sum-loss; the input gradient keeps the input's shape.
pub fn fc_backward(input: &Tensor, params: &FcParams, grad_out: &Tensor) -> Result<FcGrads> {
    params.check_input(input)?;
    let n = input.batch();
    let k = params.out_features;
    let f = params.in_features;
    if grad_out.shape() != [n, k, 1, 1] {
        return Err(Error::ShapeMismatch {
            context: "fc_backward grad_out",
            expected: format!("{:?}", [n, k, 1, 1]),
            actual: format!("{:?}", grad_out.shape()),
        });
    }

    let mut grad_bias = vec![0.0f32; k];
    for i in 0..n {
        for (j, gb) in grad_bias.iter_mut().enumerate() {
            *gb += grad_out.data()[i * k + j];
        }
    }

    // grad_W (k x f) = grad_out^T-ish product, accumulated over the batch.
    let mut grad_weights = Tensor::zeros(k, f, 1, 1);
    gemm_tn(
        grad_out.data(),
        n,
        k,
        input.data(),
        f,
        grad_weights.data_mut(),
    );

    // grad_x (n x f) = grad_out (n x k) * W (k x f).
    let [bn, bc, bh, bw] = input.shape();
    let mut grad_input = Tensor::zeros(bn, bc, bh, bw);
    gemm_nt_acc(
        grad_out.data(),
        n,
        k,
        // W^T viewed as (f x k) row-major equals W (k x f) accessed as B with s = k.
        // gemm_nt_acc computes A (n x k) * B (f x k)^T, so feed W transposed.
        &transpose(params.weights.data(), k, f),
        f,
        grad_input.data_mut(),
    );

    Ok(FcGrads {
        input: grad_input,
        weights: grad_weights,
        bias: grad_bias,
    })
}

fn transpose(a: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut t = vec![0.0f32; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}
