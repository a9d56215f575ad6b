//! Per-channel batch normalization with running statistics.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ops::Mode;
use crate::tensor::{Param, Tensor};

/// Learnable scale/shift plus running statistics for one channel axis.
///
/// In eval mode the op is a pure per-channel affine map built from the
/// running statistics; batch statistics are never read.
#[derive(Debug, Clone)]
pub struct BatchNormParams {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    /// Fraction of the batch statistic blended into the running statistic.
    pub momentum: f32,
    pub epsilon: f32,
}

impl BatchNormParams {
    pub fn new(channels: usize, momentum: f32, epsilon: f32) -> Result<BatchNormParams> {
        if channels == 0 {
            return Err(Error::invalid("batch norm needs >= 1 channel"));
        }
        if !(epsilon > 0.0) {
            return Err(Error::invalid(format!("batch norm epsilon must be > 0, got {epsilon}")));
        }
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::invalid(format!(
                "batch norm momentum must be in [0,1], got {momentum}"
            )));
        }
        Ok(BatchNormParams {
            channels,
            gamma: Param::filled(channels, 1.0),
            beta: Param::filled(channels, 0.0),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum,
            epsilon,
        })
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.channels() != self.channels {
            return Err(Error::ShapeMismatch {
                context: "batchnorm input channels",
                expected: format!("(N,{},H,W)", self.channels),
                actual: format!("{:?}", input.shape()),
            });
        }
        Ok(())
    }
}

/// Values the backward pass needs from the forward pass.
#[derive(Debug)]
pub struct BnCache {
    /// Normalized input, same layout as the op's input.
    xhat: Vec<f32>,
    /// Per-channel 1/sqrt(var + eps) actually used by the forward pass.
    inv_std: Vec<f32>,
    shape: [usize; 4],
    train: bool,
}

#[derive(Debug)]
pub struct BnGrads {
    pub input: Tensor,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

fn normalize(
    input: &Tensor,
    params: &BatchNormParams,
    mean: &[f32],
    inv_std: &[f32],
    xhat: Option<&mut Vec<f32>>,
) -> Tensor {
    let [n, c, h, w] = input.shape();
    let hw = h * w;
    let mut out = Tensor::zeros(n, c, h, w);
    let mut xhat_buf = xhat.map(|x| {
        x.resize(input.len(), 0.0);
        x
    });

    // (sample, channel) planes are independent.
    let gamma = &params.gamma.values;
    let beta = &params.beta.values;
    match &mut xhat_buf {
        Some(xh) => {
            out.data_mut()
                .par_chunks_mut(hw)
                .zip(xh.par_chunks_mut(hw))
                .enumerate()
                .for_each(|(plane, (o, xh))| {
                    let ch = plane % c;
                    let src = &input.data()[plane * hw..(plane + 1) * hw];
                    let (m, s, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
                    for ((ov, xv), &iv) in o.iter_mut().zip(xh.iter_mut()).zip(src.iter()) {
                        let norm = (iv - m) * s;
                        *xv = norm;
                        *ov = g * norm + b;
                    }
                });
        }
        None => {
            out.data_mut()
                .par_chunks_mut(hw)
                .enumerate()
                .for_each(|(plane, o)| {
                    let ch = plane % c;
                    let src = &input.data()[plane * hw..(plane + 1) * hw];
                    let (m, s, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
                    for (ov, &iv) in o.iter_mut().zip(src.iter()) {
                        *ov = g * (iv - m) * s + b;
                    }
                });
        }
    }
    out
}

/// Per-channel batch statistics (biased variance), accumulated in batch-major
/// order so results are thread-count independent.
fn batch_stats(input: &Tensor) -> (Vec<f32>, Vec<f32>) {
    let [n, c, h, w] = input.shape();
    let hw = h * w;
    let m = (n * hw) as f64;
    let mut mean = vec![0.0f32; c];
    let mut var = vec![0.0f32; c];
    mean.par_iter_mut()
        .zip(var.par_iter_mut())
        .enumerate()
        .for_each(|(ch, (mean_c, var_c))| {
            let mut sum = 0.0f64;
            for i in 0..n {
                for &v in input.plane(i, ch) {
                    sum += v as f64;
                }
            }
            let mu = sum / m;
            let mut sq = 0.0f64;
            for i in 0..n {
                for &v in input.plane(i, ch) {
                    let d = v as f64 - mu;
                    sq += d * d;
                }
            }
            *mean_c = mu as f32;
            *var_c = (sq / m) as f32;
        });
    (mean, var)
}

fn forward_impl(
    input: &Tensor,
    params: &mut BatchNormParams,
    mode: Mode,
    want_cache: bool,
) -> Result<(Tensor, Option<BnCache>)> {
    params.check_input(input)?;
    let [n, _, h, w] = input.shape();

    let (mean, inv_std, train) = match mode {
        Mode::Train => {
            if n * h * w < 2 {
                return Err(Error::invalid(format!(
                    "batch norm train mode needs N*H*W >= 2, got {}",
                    n * h * w
                )));
            }
            let (mean, var) = batch_stats(input);
            let inv_std: Vec<f32> = var
                .iter()
                .map(|&v| 1.0 / (v + params.epsilon).sqrt())
                .collect();
            let mom = params.momentum;
            for ch in 0..params.channels {
                params.running_mean[ch] = (1.0 - mom) * params.running_mean[ch] + mom * mean[ch];
                params.running_var[ch] = (1.0 - mom) * params.running_var[ch] + mom * var[ch];
            }
            (mean, inv_std, true)
        }
        Mode::Eval => {
            let inv_std: Vec<f32> = params
                .running_var
                .iter()
                .map(|&v| 1.0 / (v + params.epsilon).sqrt())
                .collect();
            (params.running_mean.clone(), inv_std, false)
        }
    };

    let mut xhat = want_cache.then(Vec::new);
    let out = normalize(input, params, &mean, &inv_std, xhat.as_mut());
    let cache = xhat.map(|xhat| BnCache {
        xhat,
        inv_std,
        shape: input.shape(),
        train,
    });
    Ok((out, cache))
}

/// Forward pass without a backward cache (inference / plain use).
pub fn batchnorm_forward(input: &Tensor, params: &mut BatchNormParams, mode: Mode) -> Result<Tensor> {
    forward_impl(input, params, mode, false).map(|(t, _)| t)
}

/// Eval-mode forward over frozen running statistics. Pure, so a frozen
/// network state can be shared by concurrent inference contexts.
pub fn batchnorm_eval(input: &Tensor, params: &BatchNormParams) -> Result<Tensor> {
    params.check_input(input)?;
    let inv_std: Vec<f32> = params
        .running_var
        .iter()
        .map(|&v| 1.0 / (v + params.epsilon).sqrt())
        .collect();
    Ok(normalize(input, params, &params.running_mean, &inv_std, None))
}

/// Forward pass that also returns the cache [`batchnorm_backward`] needs.
pub fn batchnorm_forward_cached(
    input: &Tensor,
    params: &mut BatchNormParams,
    mode: Mode,
) -> Result<(Tensor, BnCache)> {
    forward_impl(input, params, mode, true).map(|(t, c)| (t, c.expect("cache requested")))
}

/// Chain rule through the standardization (train) or through the frozen
/// affine map (eval).
pub fn batchnorm_backward(
    params: &BatchNormParams,
    cache: &BnCache,
    grad_out: &Tensor,
) -> Result<BnGrads> {
    if grad_out.shape() != cache.shape {
        return Err(Error::ShapeMismatch {
            context: "batchnorm_backward grad_out",
            expected: format!("{:?}", cache.shape),
            actual: format!("{:?}", grad_out.shape()),
        });
    }
    let [n, c, h, w] = cache.shape;
    let hw = h * w;
    let m = (n * hw) as f64;

    // Per-channel sums of g and g*xhat, batch-major order.
    let mut grad_beta = vec![0.0f32; c];
    let mut grad_gamma = vec![0.0f32; c];
    grad_beta
        .par_iter_mut()
        .zip(grad_gamma.par_iter_mut())
        .enumerate()
        .for_each(|(ch, (gb, gg))| {
            let mut sum_g = 0.0f64;
            let mut sum_gx = 0.0f64;
            for i in 0..n {
                let base = (i * c + ch) * hw;
                let g = &grad_out.data()[base..base + hw];
                let xh = &cache.xhat[base..base + hw];
                for (&gv, &xv) in g.iter().zip(xh.iter()) {
                    sum_g += gv as f64;
                    sum_gx += gv as f64 * xv as f64;
                }
            }
            *gb = sum_g as f32;
            *gg = sum_gx as f32;
        });

    let mut grad_input = Tensor::zeros(n, c, h, w);
    let gamma = &params.gamma.values;
    if cache.train {
        grad_input
            .data_mut()
            .par_chunks_mut(hw)
            .enumerate()
            .for_each(|(plane, gi)| {
                let ch = plane % c;
                let scale = gamma[ch] * cache.inv_std[ch];
                let mean_g = grad_beta[ch] as f64 / m;
                let mean_gx = grad_gamma[ch] as f64 / m;
                let g = &grad_out.data()[plane * hw..(plane + 1) * hw];
                let xh = &cache.xhat[plane * hw..(plane + 1) * hw];
                for ((o, &gv), &xv) in gi.iter_mut().zip(g.iter()).zip(xh.iter()) {
                    *o = scale * ((gv as f64 - mean_g - xv as f64 * mean_gx) as f32);
                }
            });
    } else {
        // Frozen statistics: the map is affine, so the Jacobian is diagonal.
        grad_input
            .data_mut()
            .par_chunks_mut(hw)
            .enumerate()
            .for_each(|(plane, gi)| {
                let ch = plane % c;
                let scale = gamma[ch] * cache.inv_std[ch];
                let g = &grad_out.data()[plane * hw..(plane + 1) * hw];
                for (o, &gv) in gi.iter_mut().zip(g.iter()) {
                    *o = scale * gv;
                }
            });
    }

    Ok(BnGrads {
        input: grad_input,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}
