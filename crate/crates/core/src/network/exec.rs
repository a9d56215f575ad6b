//! Forward and backward execution of a network over a batch.

use crate::error::{Error, Result};
use crate::network::spec::NetworkSpec;
use crate::network::state::{ConvBlockState, LayerState, NetworkState};
use crate::ops::{
    batchnorm_backward, batchnorm_eval, batchnorm_forward_cached, concat_channels, conv2d_backward,
    conv2d_forward, fc_backward, fc_forward, maxpool2_backward, maxpool2_forward, prelu_backward,
    prelu_forward, residual_add, split_channels, BnCache, Mode,
};
use crate::tensor::Tensor;

/// Activations cached by a training forward pass for one conv block.
struct BlockTape {
    /// Block input (also the shortcut branch).
    x: Tensor,
    bn: BnCache,
    /// Batch-norm output = PReLU input.
    bn_out: Tensor,
}

enum LayerTape {
    Block(BlockTape),
    Pool {
        input_shape: [usize; 4],
        argmax: Vec<u32>,
    },
}

/// Everything [`backward`] needs from the preceding [`forward_train`].
pub struct ForwardTape {
    lanes: Vec<Vec<LayerTape>>,
    lane_channels: Vec<usize>,
    merge: Option<BlockTape>,
    fc_input: Tensor,
}

fn check_input(spec: &NetworkSpec, batch: &Tensor) -> Result<()> {
    let [_, c, h, w] = batch.shape();
    if c != spec.in_channels || h != spec.input_side || w != spec.input_side {
        return Err(Error::ShapeMismatch {
            context: "network input",
            expected: format!(
                "(N,{},{},{})",
                spec.in_channels, spec.input_side, spec.input_side
            ),
            actual: format!("{:?}", batch.shape()),
        });
    }
    Ok(())
}

fn block_forward_eval(block: &ConvBlockState, x: &Tensor) -> Result<Tensor> {
    let y = conv2d_forward(x, &block.conv)?;
    let y = batchnorm_eval(&y, &block.bn)?;
    let y = prelu_forward(&y, &block.act)?;
    if block.shortcut {
        residual_add(&y, x)
    } else {
        Ok(y)
    }
}

fn block_forward_train(block: &mut ConvBlockState, x: Tensor) -> Result<(Tensor, BlockTape)> {
    let y = conv2d_forward(&x, &block.conv)?;
    let (bn_out, bn_cache) = batchnorm_forward_cached(&y, &mut block.bn, Mode::Train)?;
    let y = prelu_forward(&bn_out, &block.act)?;
    let out = if block.shortcut {
        residual_add(&y, &x)?
    } else {
        y
    };
    Ok((
        out,
        BlockTape {
            x,
            bn: bn_cache,
            bn_out,
        },
    ))
}

/// Inference forward pass. Requires eval mode; the state is read-only, so a
/// frozen network can serve any number of concurrent callers.
pub fn forward_eval(spec: &NetworkSpec, state: &NetworkState, batch: &Tensor) -> Result<Tensor> {
    if state.mode != Mode::Eval {
        return Err(Error::invalid("forward_eval requires eval mode"));
    }
    check_input(spec, batch)?;

    let mut lane_outputs = Vec::with_capacity(state.lanes.len());
    for lane in &state.lanes {
        let mut cur = batch.clone();
        for layer in lane {
            cur = match layer {
                LayerState::Block(b) => block_forward_eval(b, &cur)?,
                LayerState::MaxPool => maxpool2_forward(&cur)?.0,
            };
        }
        lane_outputs.push(cur);
    }
    let mut features = if lane_outputs.len() == 1 {
        lane_outputs.pop().expect("one lane")
    } else {
        concat_channels(&lane_outputs.iter().collect::<Vec<_>>())?
    };
    if let Some(m) = &state.merge {
        features = block_forward_eval(m, &features)?;
    }
    fc_forward(&features, &state.fc)
}

/// Training forward pass: updates batch-norm running statistics and returns
/// the activation tape consumed by [`backward`].
pub fn forward_train(
    spec: &NetworkSpec,
    state: &mut NetworkState,
    batch: &Tensor,
) -> Result<(Tensor, ForwardTape)> {
    if state.mode != Mode::Train {
        return Err(Error::invalid("forward_train requires train mode"));
    }
    check_input(spec, batch)?;

    let mut lanes = Vec::with_capacity(state.lanes.len());
    let mut lane_outputs = Vec::with_capacity(state.lanes.len());
    for lane in state.lanes.iter_mut() {
        let mut tape = Vec::with_capacity(lane.len());
        let mut cur = batch.clone();
        for layer in lane.iter_mut() {
            match layer {
                LayerState::Block(b) => {
                    let (out, t) = block_forward_train(b, cur)?;
                    tape.push(LayerTape::Block(t));
                    cur = out;
                }
                LayerState::MaxPool => {
                    let input_shape = cur.shape();
                    let (out, argmax) = maxpool2_forward(&cur)?;
                    tape.push(LayerTape::Pool { input_shape, argmax });
                    cur = out;
                }
            }
        }
        lanes.push(tape);
        lane_outputs.push(cur);
    }

    let lane_channels: Vec<usize> = lane_outputs.iter().map(|t| t.channels()).collect();
    let mut features = if lane_outputs.len() == 1 {
        lane_outputs.pop().expect("one lane")
    } else {
        concat_channels(&lane_outputs.iter().collect::<Vec<_>>())?
    };
    let merge = match state.merge.as_mut() {
        Some(m) => {
            let (out, t) = block_forward_train(m, features)?;
            features = out;
            Some(t)
        }
        None => None,
    };

    let logits = fc_forward(&features, &state.fc)?;
    Ok((
        logits,
        ForwardTape {
            lanes,
            lane_channels,
            merge,
            fc_input: features,
        },
    ))
}

/// Backward through one block; returns the gradient w.r.t. the block input
/// and stores parameter gradients on the block.
fn block_backward(block: &mut ConvBlockState, tape: &BlockTape, grad_out: &Tensor) -> Result<Tensor> {
    let (g_bn_out, g_slopes) = prelu_backward(&tape.bn_out, &block.act, grad_out)?;
    let bn_grads = batchnorm_backward(&block.bn, &tape.bn, &g_bn_out)?;
    let conv_grads = conv2d_backward(&tape.x, &block.conv, &bn_grads.input)?;

    block.conv.weights.set_grad(conv_grads.weights.into_data())?;
    block.conv.bias.set_grad(conv_grads.bias);
    block.bn.gamma.set_grad(bn_grads.gamma);
    block.bn.beta.set_grad(bn_grads.beta);
    block.act.slopes.set_grad(g_slopes);

    if block.shortcut {
        residual_add(&conv_grads.input, grad_out)
    } else {
        Ok(conv_grads.input)
    }
}

/// Backpropagates `grad_logits` through the cached forward pass, filling the
/// gradient buffer of every learnable parameter (PReLU slopes and batch-norm
/// gamma/beta included). Rejected outside train mode.
pub fn backward(
    _spec: &NetworkSpec,
    state: &mut NetworkState,
    tape: &ForwardTape,
    grad_logits: &Tensor,
) -> Result<()> {
    if state.mode != Mode::Train {
        return Err(Error::invalid("backward requires train mode"));
    }

    let fc_grads = fc_backward(&tape.fc_input, &state.fc, grad_logits)?;
    state.fc.weights.set_grad(fc_grads.weights.into_data())?;
    state.fc.bias.set_grad(fc_grads.bias);
    let mut g = fc_grads.input;

    if let Some(mt) = &tape.merge {
        let m = state.merge.as_mut().expect("merge state matches tape");
        g = block_backward(m, mt, &g)?;
    }

    let lane_grads: Vec<Tensor> = if tape.lane_channels.len() == 1 {
        vec![g]
    } else {
        split_channels(&g, &tape.lane_channels)?
    };

    for (li, mut lane_g) in lane_grads.into_iter().enumerate() {
        for (i, layer_tape) in tape.lanes[li].iter().enumerate().rev() {
            match layer_tape {
                LayerTape::Block(t) => {
                    let block = state.expect_block_mut(li, i);
                    lane_g = block_backward(block, t, &lane_g)?;
                }
                LayerTape::Pool { input_shape, argmax } => {
                    lane_g = maxpool2_backward(*input_shape, argmax, &lane_g)?;
                }
            }
        }
        // Gradient w.r.t. the input image is discarded.
    }
    Ok(())
}
