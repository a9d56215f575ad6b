//! Test-only reference implementations and finite-difference helpers.
//!
//! Everything here is an independent oracle: naive direct loops in f64,
//! structured so a bug in the production kernels cannot hide in its own
//! mirror image. Nothing in this module calls the crate's f32 kernels.

#![allow(dead_code)]

use std::collections::BTreeMap;

use surfclass::network::{LayerSpec, NetworkSpec, NetworkState, BN_EPSILON};

/// Step used by every central-difference oracle.
pub const FD_H: f64 = 1e-3;
/// Relative-error bound for gradient checks.
pub const FD_TOL: f64 = 1e-3;
/// Absolute floor below which two gradients count as equal. Gradients with
/// a structural value of zero (a conv bias feeding batch norm, say) come
/// back from the f32 kernels as accumulation noise of order 1e-6, and deep
/// multi-layer paths accumulate up to ~2e-5 of it; the floor sits above
/// that while still catching any real sign or magnitude error.
pub const FD_ABS_FLOOR: f64 = 2e-5;

/// Batch-norm channel variance below which a random gradient-check case is
/// redrawn: dividing by a near-zero standard deviation makes both the f32
/// forward and the finite-difference probe ill-conditioned.
pub const MIN_BN_VARIANCE: f64 = 1e-2;

/// Dense f64 NCHW tensor for reference computations.
#[derive(Debug, Clone)]
pub struct T64 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl T64 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> T64 {
        T64 {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_f32(shape: [usize; 4], data: &[f32]) -> T64 {
        T64 {
            n: shape[0],
            c: shape[1],
            h: shape[2],
            w: shape[3],
            data: data.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        self.data[((n * self.c + c) * self.h + y) * self.w + x] = v;
    }
}

/// Naive 7-loop direct cross-correlation plus bias, f64.
pub fn conv2d_ref(
    x: &T64,
    weights: &[f64],
    bias: &[f64],
    out_ch: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> T64 {
    let oh = (x.h + 2 * padding - k) / stride + 1;
    let ow = (x.w + 2 * padding - k) / stride + 1;
    let mut out = T64::zeros(x.n, out_ch, oh, ow);
    for n in 0..x.n {
        for o in 0..out_ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[o];
                    for c in 0..x.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if iy >= 0 && iy < x.h as isize && ix >= 0 && ix < x.w as isize {
                                    let w = weights[((o * x.c + c) * k + ky) * k + kx];
                                    acc += x.at(n, c, iy as usize, ix as usize) * w;
                                }
                            }
                        }
                    }
                    out.set(n, o, oy, ox, acc);
                }
            }
        }
    }
    out
}

/// Train-mode batch normalization over per-channel batch statistics
/// (biased variance), f64. Also reports the smallest channel variance so
/// callers can detect ill-conditioned cases.
pub fn batchnorm_train_ref_var(
    x: &T64,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> (T64, f64) {
    let m = (x.n * x.h * x.w) as f64;
    let mut out = x.clone();
    let mut min_var = f64::INFINITY;
    for c in 0..x.c {
        let mut sum = 0.0;
        for n in 0..x.n {
            for y in 0..x.h {
                for xx in 0..x.w {
                    sum += x.at(n, c, y, xx);
                }
            }
        }
        let mean = sum / m;
        let mut sq = 0.0;
        for n in 0..x.n {
            for y in 0..x.h {
                for xx in 0..x.w {
                    sq += (x.at(n, c, y, xx) - mean).powi(2);
                }
            }
        }
        min_var = min_var.min(sq / m);
        let inv_std = 1.0 / (sq / m + eps).sqrt();
        for n in 0..x.n {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let v = (x.at(n, c, y, xx) - mean) * inv_std * gamma[c] + beta[c];
                    out.set(n, c, y, xx, v);
                }
            }
        }
    }
    (out, min_var)
}

pub fn batchnorm_train_ref(x: &T64, gamma: &[f64], beta: &[f64], eps: f64) -> T64 {
    batchnorm_train_ref_var(x, gamma, beta, eps).0
}

pub fn prelu_ref(x: &T64, slopes: &[f64]) -> T64 {
    let mut out = x.clone();
    for n in 0..x.n {
        for c in 0..x.c {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let v = x.at(n, c, y, xx);
                    out.set(n, c, y, xx, if v > 0.0 { v } else { slopes[c] * v });
                }
            }
        }
    }
    out
}

pub fn maxpool2_ref(x: &T64) -> T64 {
    maxpool2_ref_trace(x, &mut Vec::new())
}

/// Max-pool that also records each window's argmax position (two bools per
/// cell) so finite-difference callers can detect probes that flipped a
/// winner.
pub fn maxpool2_ref_trace(x: &T64, signs: &mut Vec<bool>) -> T64 {
    let mut out = T64::zeros(x.n, x.c, x.h / 2, x.w / 2);
    for n in 0..x.n {
        for c in 0..x.c {
            for oy in 0..x.h / 2 {
                for ox in 0..x.w / 2 {
                    let mut best = f64::NEG_INFINITY;
                    let mut arg = (0usize, 0usize);
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let v = x.at(n, c, oy * 2 + dy, ox * 2 + dx);
                            if v > best {
                                best = v;
                                arg = (dy, dx);
                            }
                        }
                    }
                    signs.push(arg.0 == 1);
                    signs.push(arg.1 == 1);
                    out.set(n, c, oy, ox, best);
                }
            }
        }
    }
    out
}

/// Fully-connected layer over flattened samples, f64.
pub fn fc_ref(x: &T64, weights: &[f64], bias: &[f64], out_features: usize) -> T64 {
    let f = x.c * x.h * x.w;
    let mut out = T64::zeros(x.n, out_features, 1, 1);
    for n in 0..x.n {
        let sample = &x.data[n * f..(n + 1) * f];
        for o in 0..out_features {
            let mut acc = bias[o];
            for (j, &v) in sample.iter().enumerate() {
                acc += v * weights[o * f + j];
            }
            out.data[n * out_features + o] = acc;
        }
    }
    out
}

/// Mean NLL with max-subtracted log-softmax, f64.
pub fn logsoftmax_nll_ref(logits: &T64, targets: &[usize]) -> f64 {
    let k = logits.c;
    let mut total = 0.0;
    for n in 0..logits.n {
        let row = &logits.data[n * k..(n + 1) * k];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
        total += lse - row[targets[n]];
    }
    total / logits.n as f64
}

pub fn concat_ref(parts: &[&T64]) -> T64 {
    let n = parts[0].n;
    let (h, w) = (parts[0].h, parts[0].w);
    let c: usize = parts.iter().map(|p| p.c).sum();
    let mut out = T64::zeros(n, c, h, w);
    for i in 0..n {
        let mut offset = 0usize;
        for p in parts {
            for pc in 0..p.c {
                for y in 0..h {
                    for x in 0..w {
                        out.set(i, offset + pc, y, x, p.at(i, pc, y, x));
                    }
                }
            }
            offset += p.c;
        }
    }
    out
}

/// All parameters of a network state as f64 vectors keyed by path.
pub type ParamMap = BTreeMap<String, Vec<f64>>;

pub fn extract_params(state: &NetworkState) -> ParamMap {
    let mut map = ParamMap::new();
    state.for_each_tensor(|path, _, values| {
        map.insert(path.to_string(), values.iter().map(|&v| v as f64).collect());
    });
    map
}

fn block_prefix(lane_count: usize, lane: usize, layer: usize) -> String {
    if lane_count == 1 {
        format!("block{layer}")
    } else {
        format!("lane{lane}.block{layer}")
    }
}

/// What a reference forward pass observed, beyond the loss itself.
#[derive(Debug, Clone)]
pub struct RefTrace {
    pub loss: f64,
    /// Sign of every PReLU input, in execution order. A finite-difference
    /// caller compares the +h and -h patterns to detect probes that crossed
    /// an activation kink.
    pub signs: Vec<bool>,
    /// Smallest per-channel batch variance seen in any batch norm. Near-zero
    /// variance makes the loss surface ill-conditioned; gradient checks
    /// should redraw such cases.
    pub min_bn_variance: f64,
}

fn ref_block(
    x: &T64,
    params: &ParamMap,
    prefix: &str,
    layer: &LayerSpec,
    signs: &mut Vec<bool>,
    min_var: &mut f64,
) -> T64 {
    let LayerSpec::ConvBlock {
        kernel,
        stride,
        padding,
        out_channels,
        shortcut,
        ..
    } = *layer
    else {
        panic!("ref_block called on a pool layer");
    };
    let w = &params[&format!("{prefix}.conv.weight")];
    let b = &params[&format!("{prefix}.conv.bias")];
    let gamma = &params[&format!("{prefix}.bn.gamma")];
    let beta = &params[&format!("{prefix}.bn.beta")];
    let slopes = &params[&format!("{prefix}.prelu.slopes")];
    let y = conv2d_ref(x, w, b, out_channels, kernel, stride, padding);
    let (y, var) = batchnorm_train_ref_var(&y, gamma, beta, BN_EPSILON as f64);
    *min_var = min_var.min(var);
    signs.extend(y.data.iter().map(|&v| v > 0.0));
    let mut y = prelu_ref(&y, slopes);
    if shortcut {
        for (o, xv) in y.data.iter_mut().zip(x.data.iter()) {
            *o += xv;
        }
    }
    y
}

/// Train-mode forward pass through an arbitrary spec, entirely in f64.
/// Mirrors the executor's semantics (batch statistics in every batch norm,
/// shortcut add after the activation).
pub fn ref_forward_trace(
    spec: &NetworkSpec,
    params: &ParamMap,
    input: &T64,
    targets: &[usize],
) -> RefTrace {
    let lane_count = spec.lanes.len();
    let mut signs = Vec::new();
    let mut min_var = f64::INFINITY;
    let mut lane_outputs = Vec::with_capacity(lane_count);
    for (li, lane) in spec.lanes.iter().enumerate() {
        let mut cur = input.clone();
        for (i, layer) in lane.iter().enumerate() {
            cur = match layer {
                LayerSpec::MaxPool2 => maxpool2_ref_trace(&cur, &mut signs),
                block => ref_block(
                    &cur,
                    params,
                    &block_prefix(lane_count, li, i),
                    block,
                    &mut signs,
                    &mut min_var,
                ),
            };
        }
        lane_outputs.push(cur);
    }
    let mut features = if lane_outputs.len() == 1 {
        lane_outputs.pop().unwrap()
    } else {
        concat_ref(&lane_outputs.iter().collect::<Vec<_>>())
    };
    if let Some(m) = &spec.merge {
        let layer = LayerSpec::ConvBlock {
            kernel: 1,
            stride: 1,
            padding: 0,
            in_channels: m.in_channels,
            out_channels: m.out_channels,
            shortcut: false,
        };
        features = ref_block(&features, params, "merge", &layer, &mut signs, &mut min_var);
    }
    let fc_w = &params["fc.weight"];
    let fc_b = &params["fc.bias"];
    let logits = fc_ref(&features, fc_w, fc_b, fc_b.len());
    RefTrace {
        loss: logsoftmax_nll_ref(&logits, targets),
        signs,
        min_bn_variance: min_var,
    }
}

pub fn ref_forward_loss(
    spec: &NetworkSpec,
    params: &ParamMap,
    input: &T64,
    targets: &[usize],
) -> f64 {
    ref_forward_trace(spec, params, input, targets).loss
}

/// Relative-error comparison with an absolute floor for near-zero pairs.
pub fn grad_close(analytic: f64, fd: f64) -> bool {
    let diff = (analytic - fd).abs();
    diff <= FD_ABS_FLOOR || diff <= FD_TOL * analytic.abs().max(fd.abs())
}

/// Central finite difference of `loss` w.r.t. every entry of one parameter
/// vector living inside `values`.
pub fn central_diff(values: &mut [f64], loss: &mut dyn FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut grads = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let saved = values[i];
        values[i] = saved + FD_H;
        let plus = loss(values);
        values[i] = saved - FD_H;
        let minus = loss(values);
        values[i] = saved;
        grads.push((plus - minus) / (2.0 * FD_H));
    }
    grads
}

/// Asserts two gradient vectors agree elementwise, with an optional mask
/// for entries too close to a kink for finite differences to be valid.
pub fn assert_grads_match(
    analytic: &[f32],
    fd: &[f64],
    mask: Option<&[bool]>,
    context: &str,
) {
    assert_eq!(analytic.len(), fd.len(), "{context}: length mismatch");
    for (i, (&a, &f)) in analytic.iter().zip(fd.iter()).enumerate() {
        if let Some(m) = mask {
            if !m[i] {
                continue;
            }
        }
        assert!(
            grad_close(a as f64, f),
            "{context}[{i}]: analytic {a} vs finite-difference {f}"
        );
    }
}
