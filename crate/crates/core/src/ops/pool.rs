//! 2x2 stride-2 max pooling with stored argmax positions.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Window maximum over non-overlapping 2x2 windows. Ties go to the first
/// maximum in row-major window scan order, so gradients route
/// deterministically. Also returns the flat input index of each winner.
pub fn maxpool2_forward(input: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    let [n, c, h, w] = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(format!(
            "maxpool2 requires even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(n, c, oh, ow);
    let mut argmax = vec![0u32; n * c * oh * ow];

    out.data_mut()
        .par_chunks_mut(oh * ow)
        .zip(argmax.par_chunks_mut(oh * ow))
        .enumerate()
        .for_each(|(plane, (o, am))| {
            let base = plane * h * w;
            let src = &input.data()[base..base + h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = (oy * 2 + dy) * w + (ox * 2 + dx);
                            let v = src[idx];
                            if v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    o[oy * ow + ox] = best;
                    am[oy * ow + ox] = (base + best_idx) as u32;
                }
            }
        });

    Ok((out, argmax))
}

/// Routes each output gradient to its stored argmax position.
pub fn maxpool2_backward(
    input_shape: [usize; 4],
    argmax: &[u32],
    grad_out: &Tensor,
) -> Result<Tensor> {
    let [n, c, h, w] = input_shape;
    let expected = [n, c, h / 2, w / 2];
    if grad_out.shape() != expected {
        return Err(Error::ShapeMismatch {
            context: "maxpool2_backward grad_out",
            expected: format!("{expected:?}"),
            actual: format!("{:?}", grad_out.shape()),
        });
    }
    if argmax.len() != grad_out.len() {
        return Err(Error::ShapeMismatch {
            context: "maxpool2_backward argmax",
            expected: format!("{} indices", grad_out.len()),
            actual: format!("{} indices", argmax.len()),
        });
    }
    let mut grad_input = Tensor::zeros(n, c, h, w);
    let data = grad_input.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data().iter()) {
        data[idx as usize] += g;
    }
    Ok(grad_input)
}
