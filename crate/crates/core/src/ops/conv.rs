//! 2-D convolution (cross-correlation) via im2col + GEMM.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matmul::{gemm_nn, gemm_nt_acc, gemm_tn};
use crate::tensor::{Param, Tensor};

/// Square-kernel convolution parameters.
///
/// Only the kernel sizes the three architectures use are accepted, and 1x1
/// kernels are pinned to stride 1 / padding 0 (they act as per-pixel channel
/// mixers, never as downsamplers).
#[derive(Debug, Clone)]
pub struct ConvParams {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Shape (out_channels, in_channels, kernel, kernel).
    pub weights: Tensor,
    pub bias: Param,
}

impl ConvParams {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<ConvParams> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::invalid("conv channel counts must be >= 1"));
        }
        if !matches!(kernel, 1 | 3 | 5) {
            return Err(Error::invalid(format!(
                "conv kernel size must be 1, 3 or 5, got {kernel}"
            )));
        }
        if kernel == 1 && (padding != 0 || stride != 1) {
            return Err(Error::invalid(format!(
                "1x1 conv requires stride 1 and padding 0, got stride {stride} padding {padding}"
            )));
        }
        if stride == 0 {
            return Err(Error::invalid("conv stride must be >= 1"));
        }
        Ok(ConvParams {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weights: Tensor::zeros(out_channels, in_channels, kernel, kernel),
            bias: Param::filled(out_channels, 0.0),
        })
    }

    /// Output spatial size: `floor((d + 2p - k) / s) + 1`, which must be >= 1.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let dim = |d: usize| -> Result<usize> {
            let padded = d + 2 * self.padding;
            if padded < self.kernel {
                return Err(Error::invalid(format!(
                    "conv input side {d} with padding {} is smaller than kernel {}",
                    self.padding, self.kernel
                )));
            }
            Ok((padded - self.kernel) / self.stride + 1)
        };
        Ok((dim(h)?, dim(w)?))
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize)> {
        if input.channels() != self.in_channels {
            return Err(Error::ShapeMismatch {
                context: "conv2d input channels",
                expected: format!(
                    "(N,{},H,W) for weights {:?}",
                    self.in_channels,
                    self.weights.shape()
                ),
                actual: format!("{:?}", input.shape()),
            });
        }
        self.output_hw(input.height(), input.width())
    }
}

/// Gradients of a scalar sum-loss with respect to a convolution's inputs.
#[derive(Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f32>,
}

/// Unrolls one sample into patch columns: row `(c*k + ky)*k + kx`, column
/// `oy*out_w + ox`. Out-of-image taps read as zero.
fn im2col(
    sample: &[f32],
    (h, w): (usize, usize),
    params: &ConvParams,
    (out_h, out_w): (usize, usize),
    cols: &mut [f32],
) {
    let k = params.kernel;
    let s = params.stride;
    let p = params.padding as isize;
    let spatial = out_h * out_w;
    debug_assert_eq!(cols.len(), params.patch_len() * spatial);

    for c in 0..params.in_channels {
        let plane = &sample[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * spatial..][..spatial];
                for oy in 0..out_h {
                    let iy = (oy * s) as isize + ky as isize - p;
                    let dst = &mut row[oy * out_w..(oy + 1) * out_w];
                    if iy < 0 || iy >= h as isize {
                        dst.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * s) as isize + kx as isize - p;
                        *d = if ix >= 0 && ix < w as isize {
                            src_row[ix as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds patch-column gradients back onto the input sample.
fn col2im_acc(
    cols: &[f32],
    (h, w): (usize, usize),
    params: &ConvParams,
    (out_h, out_w): (usize, usize),
    sample: &mut [f32],
) {
    let k = params.kernel;
    let s = params.stride;
    let p = params.padding as isize;
    let spatial = out_h * out_w;

    for c in 0..params.in_channels {
        let plane = &mut sample[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((c * k + ky) * k + kx) * spatial..][..spatial];
                for oy in 0..out_h {
                    let iy = (oy * s) as isize + ky as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &g) in row[oy * out_w..(oy + 1) * out_w].iter().enumerate() {
                        let ix = (ox * s) as isize + kx as isize - p;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += g;
                        }
                    }
                }
            }
            }
    }
}

fn is_pointwise(params: &ConvParams) -> bool {
    params.kernel == 1 && params.stride == 1 && params.padding == 0
}

/// Direct cross-correlation plus bias.
///
/// Output shape `(N, out_channels, H', W')` with the size formula from
/// [`ConvParams::output_hw`]. Samples are independent and processed in
/// parallel; within a sample every output element accumulates its taps in a
/// fixed order.
pub fn conv2d_forward(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    let (out_h, out_w) = params.check_input(input)?;
    let n = input.batch();
    let (h, w) = (input.height(), input.width());
    let spatial = out_h * out_w;
    let patch = params.patch_len();
    let mut output = Tensor::zeros(n, params.out_channels, out_h, out_w);
    let out_sample = params.out_channels * spatial;
    let weights = params.weights.data();
    let bias = &params.bias.values;

    output
        .data_mut()
        .par_chunks_mut(out_sample)
        .enumerate()
        .for_each(|(i, out_s)| {
            let sample = input.sample(i);
            if is_pointwise(params) {
                gemm_nn(weights, params.out_channels, patch, sample, spatial, out_s);
            } else {
                let mut cols = vec![0.0f32; patch * spatial];
                im2col(sample, (h, w), params, (out_h, out_w), &mut cols);
                gemm_nn(weights, params.out_channels, patch, &cols, spatial, out_s);
            }
            for (o, row) in out_s.chunks_mut(spatial).enumerate() {
                let b = bias[o];
                if b != 0.0 {
                    row.iter_mut().for_each(|v| *v += b);
                }
            }
        });

    Ok(output)
}

/// Gradients of the sum-loss w.r.t. input, weights and bias.
///
/// `grad_bias[o]` is the plain sum of `grad_out` over batch and space for
/// channel `o`; weight gradients accumulate over samples in batch order.
pub fn conv2d_backward(
    input: &Tensor,
    params: &ConvParams,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let (out_h, out_w) = params.check_input(input)?;
    let n = input.batch();
    let expected = [n, params.out_channels, out_h, out_w];
    if grad_out.shape() != expected {
        return Err(Error::ShapeMismatch {
            context: "conv2d_backward grad_out",
            expected: format!("{expected:?}"),
            actual: format!("{:?}", grad_out.shape()),
        });
    }

    let (h, w) = (input.height(), input.width());
    let spatial = out_h * out_w;
    let patch = params.patch_len();
    let weights = params.weights.data();

    // Bias gradient: fixed batch-major accumulation order.
    let mut grad_bias = vec![0.0f32; params.out_channels];
    for i in 0..n {
        let gs = grad_out.sample(i);
        for (o, gb) in grad_bias.iter_mut().enumerate() {
            let row = &gs[o * spatial..(o + 1) * spatial];
            *gb += row.iter().sum::<f32>();
        }
    }

    // Weight gradient: per-sample GEMMs accumulated sequentially over the
    // batch (parallelism lives inside the GEMM rows).
    let mut grad_weights = Tensor::zeros(
        params.out_channels,
        params.in_channels,
        params.kernel,
        params.kernel,
    );
    let mut cols = vec![0.0f32; patch * spatial];
    for i in 0..n {
        let sample = input.sample(i);
        let gs = grad_out.sample(i);
        if is_pointwise(params) {
            gemm_nt_acc(
                gs,
                params.out_channels,
                spatial,
                sample,
                patch,
                grad_weights.data_mut(),
            );
        } else {
            im2col(sample, (h, w), params, (out_h, out_w), &mut cols);
            gemm_nt_acc(
                gs,
                params.out_channels,
                spatial,
                &cols,
                patch,
                grad_weights.data_mut(),
            );
        }
    }

    // Input gradient: independent per sample.
    let mut grad_input = Tensor::zeros(n, params.in_channels, h, w);
    let in_sample = params.in_channels * h * w;
    grad_input
        .data_mut()
        .par_chunks_mut(in_sample)
        .enumerate()
        .for_each(|(i, gi)| {
            let gs = grad_out.sample(i);
            if is_pointwise(params) {
                gemm_tn(weights, params.out_channels, patch, gs, spatial, gi);
            } else {
                let mut cols_grad = vec![0.0f32; patch * spatial];
                gemm_tn(
                    weights,
                    params.out_channels,
                    patch,
                    gs,
                    spatial,
                    &mut cols_grad,
                );
                col2im_acc(&cols_grad, (h, w), params, (out_h, out_w), gi);
            }
        });

    Ok(ConvGrads {
        input: grad_input,
        weights: grad_weights,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Naive 7-loop direct convolution, f64 accumulation. Independent oracle
    /// for the im2col/GEMM path.
    pub fn conv2d_direct(input: &Tensor, params: &ConvParams) -> Tensor {
        let (out_h, out_w) = params
            .output_hw(input.height(), input.width())
            .expect("oracle sizes");
        let n = input.batch();
        let k = params.kernel;
        let mut out = Tensor::zeros(n, params.out_channels, out_h, out_w);
        for i in 0..n {
            for o in 0..params.out_channels {
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let mut acc = params.bias.values[o] as f64;
                        for c in 0..params.in_channels {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * params.stride + ky) as isize
                                        - params.padding as isize;
                                    let ix = (ox * params.stride + kx) as isize
                                        - params.padding as isize;
                                    if iy >= 0
                                        && iy < input.height() as isize
                                        && ix >= 0
                                        && ix < input.width() as isize
                                    {
                                        acc += input.at(i, c, iy as usize, ix as usize) as f64
                                            * params.weights.at(o, c, ky, kx) as f64;
                                    }
                                }
                            }
                        }
                        let idx = ((i * params.out_channels + o) * out_h + oy) * out_w + ox;
                        out.data_mut()[idx] = acc as f32;
                    }
                }
            }
        }
        out
    }

    fn randomize(t: &mut Tensor, rng: &mut rand_chacha::ChaCha8Rng) {
        t.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }

    #[test]
    fn kernel_size_validation() {
        assert!(ConvParams::new(1, 1, 2, 1, 0).is_err());
        assert!(ConvParams::new(1, 1, 7, 1, 0).is_err());
        assert!(ConvParams::new(1, 1, 1, 2, 0).is_err());
        assert!(ConvParams::new(1, 1, 1, 1, 1).is_err());
        assert!(ConvParams::new(1, 1, 5, 2, 2).is_ok());
    }

    #[test]
    fn stride2_halves_128() {
        let params = ConvParams::new(1, 4, 5, 2, 2).unwrap();
        let input = Tensor::zeros(1, 1, 128, 128);
        let out = conv2d_forward(&input, &params).unwrap();
        assert_eq!(out.shape(), [1, 4, 64, 64]);
    }

    #[test]
    fn all_ones_3x3_sums_to_nine() {
        let mut params = ConvParams::new(1, 1, 3, 1, 0).unwrap();
        params.weights.data_mut().iter_mut().for_each(|v| *v = 1.0);
        let input = Tensor::from_vec([1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let out = conv2d_forward(&input, &params).unwrap();
        assert_eq!(out.shape(), [1, 1, 1, 1]);
        assert_eq!(out.data()[0], 9.0);
    }

    #[test]
    fn channel_mismatch_reports_both_shapes() {
        let params = ConvParams::new(3, 4, 3, 1, 1).unwrap();
        let input = Tensor::zeros(1, 2, 8, 8);
        let err = conv2d_forward(&input, &params).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2, 8, 8]"), "{msg}");
        assert!(msg.contains("(N,3,H,W)"), "{msg}");
    }

    #[test]
    fn matches_direct_oracle_on_random_cases() {
        let mut rng = crate::rng::derive(11, 0xC0);
        for &(cin, cout, k, s, p, h, w) in &[
            (3usize, 2usize, 5usize, 2usize, 2usize, 9usize, 9usize),
            (2, 3, 3, 2, 1, 8, 10),
            (4, 2, 1, 1, 0, 6, 6),
            (1, 5, 5, 2, 2, 12, 12),
            (2, 2, 3, 1, 1, 7, 7),
        ] {
            let mut params = ConvParams::new(cin, cout, k, s, p).unwrap();
            randomize(&mut params.weights, &mut rng);
            params
                .bias
                .values
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-0.5..0.5));
            let mut input = Tensor::zeros(2, cin, h, w);
            randomize(&mut input, &mut rng);

            let fast = conv2d_forward(&input, &params).unwrap();
            let oracle = conv2d_direct(&input, &params);
            assert_eq!(fast.shape(), oracle.shape());
            for (a, b) in fast.data().iter().zip(oracle.data().iter()) {
                assert!((a - b).abs() <= 1e-5, "conv mismatch: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = crate::rng::derive(5, 0xC1);
        let mut params = ConvParams::new(2, 3, 3, 2, 1).unwrap();
        randomize(&mut params.weights, &mut rng);
        let mut input = Tensor::zeros(1, 2, 6, 6);
        randomize(&mut input, &mut rng);
        let out = conv2d_forward(&input, &params).unwrap();
        let grad_out = Tensor::zeros(
            out.batch(),
            out.channels(),
            out.height(),
            out.width(),
        );
        let grads = conv2d_backward(&input, &params, &grad_out).unwrap();
        assert!(grads.input.data().iter().all(|&v| v == 0.0));
        assert!(grads.weights.data().iter().all(|&v| v == 0.0));
        assert!(grads.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pointwise_grad_input_is_transposed_weight_contraction() {
        let mut rng = crate::rng::derive(6, 0xC2);
        let mut params = ConvParams::new(3, 2, 1, 1, 0).unwrap();
        randomize(&mut params.weights, &mut rng);
        let mut input = Tensor::zeros(1, 3, 4, 4);
        randomize(&mut input, &mut rng);
        let mut grad_out = Tensor::zeros(1, 2, 4, 4);
        randomize(&mut grad_out, &mut rng);

        let grads = conv2d_backward(&input, &params, &grad_out).unwrap();
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    let mut expect = 0.0f32;
                    for o in 0..2 {
                        expect += grad_out.at(0, o, y, x) * params.weights.at(o, c, 0, 0);
                    }
                    let got = grads.input.at(0, c, y, x);
                    assert!((got - expect).abs() < 1e-6, "{got} vs {expect}");
                }
            }
        }
    }

    #[test]
    fn grad_bias_is_sum_over_batch_and_space() {
        let mut rng = crate::rng::derive(7, 0xC3);
        let params = ConvParams::new(1, 2, 3, 1, 1).unwrap();
        let input = Tensor::zeros(2, 1, 4, 4);
        let mut grad_out = Tensor::zeros(2, 2, 4, 4);
        randomize(&mut grad_out, &mut rng);
        let grads = conv2d_backward(&input, &params, &grad_out).unwrap();
        for o in 0..2 {
            let mut expect = 0.0f64;
            for i in 0..2 {
                for y in 0..4 {
                    for x in 0..4 {
                        expect += grad_out.at(i, o, y, x) as f64;
                    }
                }
            }
            assert!((grads.bias[o] as f64 - expect).abs() < 1e-4);
        }
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = crate::rng::derive(8, 0xC4);
        let mut params = ConvParams::new(2, 2, 5, 2, 2).unwrap();
        randomize(&mut params.weights, &mut rng);
        let mut input = Tensor::zeros(3, 2, 10, 10);
        randomize(&mut input, &mut rng);
        let a = conv2d_forward(&input, &params).unwrap();
        let b = conv2d_forward(&input, &params).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
