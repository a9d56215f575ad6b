//! Residual addition and channel concatenation.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Elementwise `x + fx`. The backward pass is the identity into both
/// branches, so no dedicated backward function exists.
pub fn residual_add(x: &Tensor, fx: &Tensor) -> Result<Tensor> {
    if x.shape() != fx.shape() {
        return Err(Error::ShapeMismatch {
            context: "residual_add",
            expected: format!("{:?}", x.shape()),
            actual: format!("{:?}", fx.shape()),
        });
    }
    let mut out = x.clone();
    out.clear_grad();
    for (o, &f) in out.data_mut().iter_mut().zip(fx.data().iter()) {
        *o += f;
    }
    Ok(out)
}

/// Stacks inputs along the channel axis; all inputs must share (N, H, W).
pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::invalid("concat_channels needs at least one input"))?;
    let [n, _, h, w] = first.shape();
    let mut channels = 0usize;
    for t in inputs {
        let [tn, tc, th, tw] = t.shape();
        if (tn, th, tw) != (n, h, w) {
            return Err(Error::ShapeMismatch {
                context: "concat_channels",
                expected: format!("(N,H,W) = ({n},{h},{w})"),
                actual: format!("{:?}", t.shape()),
            });
        }
        channels += tc;
    }

    let mut out = Tensor::zeros(n, channels, h, w);
    let hw = h * w;
    let out_sample = channels * hw;
    for i in 0..n {
        let mut offset = 0usize;
        for t in inputs {
            let src = t.sample(i);
            out.data_mut()[i * out_sample + offset..i * out_sample + offset + src.len()]
                .copy_from_slice(src);
            offset += src.len();
        }
    }
    Ok(out)
}

/// Inverse of [`concat_channels`]: slices a tensor back into per-lane pieces
/// with the given channel counts. Used to route gradients to each lane.
pub fn split_channels(t: &Tensor, channel_sizes: &[usize]) -> Result<Vec<Tensor>> {
    let [n, c, h, w] = t.shape();
    let total: usize = channel_sizes.iter().sum();
    if total != c || channel_sizes.iter().any(|&s| s == 0) {
        return Err(Error::ShapeMismatch {
            context: "split_channels",
            expected: format!("channel sizes summing to {c}"),
            actual: format!("{channel_sizes:?}"),
        });
    }
    let hw = h * w;
    let mut parts = Vec::with_capacity(channel_sizes.len());
    let mut offset = 0usize;
    for &sc in channel_sizes {
        let mut part = Tensor::zeros(n, sc, h, w);
        for i in 0..n {
            let src = &t.sample(i)[offset * hw..(offset + sc) * hw];
            part.sample_mut(i).copy_from_slice(src);
        }
        offset += sc;
        parts.push(part);
    }
    Ok(parts)
}
