//! Parametric ReLU with a learnable per-channel negative-side slope.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Param, Tensor};

#[derive(Debug, Clone)]
pub struct PReluParams {
    pub slopes: Param,
}

impl PReluParams {
    /// One learnable slope per channel, initialized to 0.25.
    pub fn new(channels: usize) -> PReluParams {
        PReluParams {
            slopes: Param::filled(channels, 0.25),
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.channels() != self.slopes.len() {
            return Err(Error::ShapeMismatch {
                context: "prelu input channels",
                expected: format!("(N,{},H,W)", self.slopes.len()),
                actual: format!("{:?}", input.shape()),
            });
        }
        Ok(())
    }
}

/// `y = x` for `x > 0`, `a_c * x` otherwise.
pub fn prelu_forward(input: &Tensor, params: &PReluParams) -> Result<Tensor> {
    params.check_input(input)?;
    let [n, c, h, w] = input.shape();
    let hw = h * w;
    let mut out = Tensor::zeros(n, c, h, w);
    let slopes = &params.slopes.values;
    out.data_mut()
        .par_chunks_mut(hw)
        .enumerate()
        .for_each(|(plane, o)| {
            let a = slopes[plane % c];
            let src = &input.data()[plane * hw..(plane + 1) * hw];
            for (ov, &x) in o.iter_mut().zip(src.iter()) {
                *ov = if x > 0.0 { x } else { a * x };
            }
        });
    Ok(out)
}

/// Gradients for input and for the per-channel slopes
/// (`grad_slope_c = sum over non-positive positions of grad_out * x`).
pub fn prelu_backward(
    input: &Tensor,
    params: &PReluParams,
    grad_out: &Tensor,
) -> Result<(Tensor, Vec<f32>)> {
    params.check_input(input)?;
    if grad_out.shape() != input.shape() {
        return Err(Error::ShapeMismatch {
            context: "prelu_backward grad_out",
            expected: format!("{:?}", input.shape()),
            actual: format!("{:?}", grad_out.shape()),
        });
    }
    let [n, c, h, w] = input.shape();
    let hw = h * w;
    let slopes = &params.slopes.values;

    let mut grad_input = Tensor::zeros(n, c, h, w);
    grad_input
        .data_mut()
        .par_chunks_mut(hw)
        .enumerate()
        .for_each(|(plane, gi)| {
            let a = slopes[plane % c];
            let x = &input.data()[plane * hw..(plane + 1) * hw];
            let g = &grad_out.data()[plane * hw..(plane + 1) * hw];
            for ((o, &xv), &gv) in gi.iter_mut().zip(x.iter()).zip(g.iter()) {
                *o = if xv > 0.0 { gv } else { a * gv };
            }
        });

    let mut grad_slopes = vec![0.0f32; c];
    grad_slopes
        .par_iter_mut()
        .enumerate()
        .for_each(|(ch, gs)| {
            let mut acc = 0.0f64;
            for i in 0..n {
                let base = (i * c + ch) * hw;
                let x = &input.data()[base..base + hw];
                let g = &grad_out.data()[base..base + hw];
                for (&xv, &gv) in x.iter().zip(g.iter()) {
                    if xv <= 0.0 {
                        acc += gv as f64 * xv as f64;
                    }
                }
            }
            *gs = acc as f32;
        });

    Ok((grad_input, grad_slopes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition_values() {
        let params = PReluParams {
            slopes: Param::new(vec![0.25]),
        };
        let input = Tensor::from_vec([1, 1, 1, 2], vec![-2.0, 3.0]).unwrap();
        let out = prelu_forward(&input, &params).unwrap();
        assert_eq!(out.data(), &[-0.5, 3.0]);
    }

    #[test]
    fn zero_slope_is_relu() {
        let params = PReluParams {
            slopes: Param::new(vec![0.0]),
        };
        let input = Tensor::from_vec([1, 1, 1, 4], vec![-1.5, -0.1, 0.2, 2.0]).unwrap();
        let out = prelu_forward(&input, &params).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 0.2, 2.0]);
    }

    #[test]
    fn slope_grad_accumulates_negative_side_only() {
        let params = PReluParams {
            slopes: Param::new(vec![0.5]),
        };
        let input = Tensor::from_vec([1, 1, 1, 3], vec![-2.0, 1.0, -0.5]).unwrap();
        let grad_out = Tensor::from_vec([1, 1, 1, 3], vec![1.0, 10.0, 2.0]).unwrap();
        let (gi, gs) = prelu_backward(&input, &params, &grad_out).unwrap();
        assert_eq!(gi.data(), &[0.5, 10.0, 1.0]);
        assert!((gs[0] - (-2.0 - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn channel_count_checked() {
        let params = PReluParams::new(2);
        let input = Tensor::zeros(1, 3, 2, 2);
        assert!(prelu_forward(&input, &params).is_err());
    }
}
