//! Learnable parameters and running statistics for a network.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::network::spec::{LayerSpec, NetworkSpec};
use crate::ops::{he_init, BatchNormParams, ConvParams, FcParams, Mode, PReluParams};
use crate::rng;

/// Conventional defaults; override the public fields on the built state if
/// an experiment needs different values.
pub const BN_MOMENTUM: f32 = 0.1;
pub const BN_EPSILON: f32 = 1e-5;

/// conv -> batch norm -> PReLU, optionally wrapped by a shortcut.
#[derive(Debug, Clone)]
pub struct ConvBlockState {
    pub conv: ConvParams,
    pub bn: BatchNormParams,
    pub act: PReluParams,
    pub shortcut: bool,
}

#[derive(Debug, Clone)]
pub enum LayerState {
    Block(ConvBlockState),
    MaxPool,
}

/// All parameters of one network, keyed by a stable layer path.
///
/// Enumeration order (used by the optimizer and the checkpoint format):
/// lanes in order, layers in order; within a block `conv.weight, conv.bias,
/// bn.gamma, bn.beta, [bn.running_mean, bn.running_var,] prelu.slopes`; then
/// the merge block; then `fc.weight, fc.bias`. Running statistics appear
/// only in the full-tensor walk, not in the learnable walk.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub lanes: Vec<Vec<LayerState>>,
    pub merge: Option<ConvBlockState>,
    pub fc: FcParams,
    pub mode: Mode,
}

/// What a learnable tensor is, which decides whether weight decay applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    FcWeight,
    FcBias,
    BnGamma,
    BnBeta,
    PreluSlope,
}

impl ParamKind {
    /// L2 decay applies to weight matrices only. Biases, normalization and
    /// activation parameters are excluded: a conv bias feeding batch norm
    /// has a structurally zero gradient, so its squared-gradient average
    /// stays near zero and a decay term divided by `sqrt(v) + eps` would
    /// blow the parameter up instead of shrinking it.
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::ConvWeight | ParamKind::FcWeight)
    }
}

/// Mutable view of one learnable tensor plus its gradient.
pub struct ParamSlot<'a> {
    pub path: String,
    pub kind: ParamKind,
    pub values: &'a mut Vec<f32>,
    pub grad: &'a mut Option<Vec<f32>>,
}

fn block_from_spec(layer: &LayerSpec, rng: &mut Option<&mut ChaCha8Rng>) -> Result<LayerState> {
    match *layer {
        LayerSpec::MaxPool2 => Ok(LayerState::MaxPool),
        LayerSpec::ConvBlock {
            kernel,
            stride,
            padding,
            in_channels,
            out_channels,
            shortcut,
        } => {
            let mut conv = ConvParams::new(in_channels, out_channels, kernel, stride, padding)?;
            if let Some(r) = rng {
                let fan_in = in_channels * kernel * kernel;
                conv.weights = he_init([out_channels, in_channels, kernel, kernel], fan_in, r)?;
            }
            Ok(LayerState::Block(ConvBlockState {
                conv,
                bn: BatchNormParams::new(out_channels, BN_MOMENTUM, BN_EPSILON)?,
                act: PReluParams::new(out_channels),
                shortcut,
            }))
        }
    }
}

impl NetworkState {
    /// He-initialized state for a validated spec; layers are initialized in
    /// enumeration order from one derived rng, so a fixed seed gives a
    /// bit-identical state.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<NetworkState> {
        let mut rng = rng::derive(seed, rng::stream::INIT);
        Self::build(spec, &mut Some(&mut rng))
    }

    /// Zero-weight state with the right shapes (checkpoint loading target).
    pub(crate) fn zeros(spec: &NetworkSpec) -> Result<NetworkState> {
        Self::build(spec, &mut None)
    }

    fn build(spec: &NetworkSpec, rng: &mut Option<&mut ChaCha8Rng>) -> Result<NetworkState> {
        let walk = spec.shape_walk()?;
        let mut lanes = Vec::with_capacity(spec.lanes.len());
        for lane in &spec.lanes {
            let mut states = Vec::with_capacity(lane.len());
            for layer in lane {
                states.push(block_from_spec(layer, rng)?);
            }
            lanes.push(states);
        }
        let merge = match &spec.merge {
            Some(m) => {
                let layer = LayerSpec::ConvBlock {
                    kernel: 1,
                    stride: 1,
                    padding: 0,
                    in_channels: m.in_channels,
                    out_channels: m.out_channels,
                    shortcut: false,
                };
                match block_from_spec(&layer, rng)? {
                    LayerState::Block(b) => Some(b),
                    LayerState::MaxPool => unreachable!(),
                }
            }
            None => None,
        };
        let mut fc = FcParams::new(walk.fc_in, spec.class_count)?;
        if let Some(r) = rng {
            fc.weights = he_init([spec.class_count, walk.fc_in, 1, 1], walk.fc_in, r)?;
        }
        Ok(NetworkState {
            lanes,
            merge,
            fc,
            mode: Mode::Train,
        })
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Visits every learnable tensor in enumeration order.
    pub fn for_each_param(&mut self, mut f: impl FnMut(ParamSlot<'_>) -> Result<()>) -> Result<()> {
        let lane_count = self.lanes.len();
        for (li, lane) in self.lanes.iter_mut().enumerate() {
            for (i, layer) in lane.iter_mut().enumerate() {
                if let LayerState::Block(b) = layer {
                    let prefix = if lane_count == 1 {
                        format!("block{i}")
                    } else {
                        format!("lane{li}.block{i}")
                    };
                    visit_block(b, &prefix, &mut f)?;
                }
            }
        }
        if let Some(b) = &mut self.merge {
            visit_block(b, "merge", &mut f)?;
        }
        let (values, grad) = self.fc.weights.values_grad_mut();
        f(ParamSlot {
            path: "fc.weight".into(),
            kind: ParamKind::FcWeight,
            values,
            grad,
        })?;
        f(ParamSlot {
            path: "fc.bias".into(),
            kind: ParamKind::FcBias,
            values: &mut self.fc.bias.values,
            grad: &mut self.fc.bias.grad,
        })
    }

    /// Visits every tensor that belongs in a checkpoint (learnables plus
    /// batch-norm running statistics) in enumeration order.
    pub fn for_each_tensor(&self, mut f: impl FnMut(&str, &[usize], &[f32])) {
        let lane_count = self.lanes.len();
        for (li, lane) in self.lanes.iter().enumerate() {
            for (i, layer) in lane.iter().enumerate() {
                if let LayerState::Block(b) = layer {
                    let prefix = if lane_count == 1 {
                        format!("block{i}")
                    } else {
                        format!("lane{li}.block{i}")
                    };
                    tensor_block(b, &prefix, &mut f);
                }
            }
        }
        if let Some(b) = &self.merge {
            tensor_block(b, "merge", &mut f);
        }
        let ws = self.fc.weights.shape();
        f("fc.weight", &ws, self.fc.weights.data());
        f("fc.bias", &[self.fc.bias.len()], &self.fc.bias.values);
    }

    /// Mutable variant of [`Self::for_each_tensor`], used by the checkpoint
    /// loader. Shapes are immutable; only values can be replaced.
    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&str, &mut Vec<f32>) -> Result<()>) -> Result<()> {
        let lane_count = self.lanes.len();
        for (li, lane) in self.lanes.iter_mut().enumerate() {
            for (i, layer) in lane.iter_mut().enumerate() {
                if let LayerState::Block(b) = layer {
                    let prefix = if lane_count == 1 {
                        format!("block{i}")
                    } else {
                        format!("lane{li}.block{i}")
                    };
                    tensor_block_mut(b, &prefix, &mut f)?;
                }
            }
        }
        if let Some(b) = &mut self.merge {
            tensor_block_mut(b, "merge", &mut f)?;
        }
        f("fc.weight", self.fc.weights.data_vec_mut())?;
        f("fc.bias", &mut self.fc.bias.values)
    }

    /// Number of learnable tensors (for the census invariant).
    pub fn learnable_tensor_count(&mut self) -> usize {
        let mut n = 0usize;
        self.for_each_param(|_| {
            n += 1;
            Ok(())
        })
        .expect("counting cannot fail");
        n
    }

    /// Drops all gradient buffers.
    pub fn clear_grads(&mut self) {
        self.for_each_param(|slot| {
            *slot.grad = None;
            Ok(())
        })
        .expect("clearing cannot fail");
    }

    /// Sum over |p|^2 of decayable parameters; handy for decay tests.
    pub fn decayable_sq_norm(&mut self) -> f64 {
        let mut total = 0.0f64;
        self.for_each_param(|slot| {
            if slot.kind.decays() {
                total += slot.values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>();
            }
            Ok(())
        })
        .expect("norm walk cannot fail");
        total
    }
}

fn visit_block(
    b: &mut ConvBlockState,
    prefix: &str,
    f: &mut impl FnMut(ParamSlot<'_>) -> Result<()>,
) -> Result<()> {
    let (values, grad) = b.conv.weights.values_grad_mut();
    f(ParamSlot {
        path: format!("{prefix}.conv.weight"),
        kind: ParamKind::ConvWeight,
        values,
        grad,
    })?;
    f(ParamSlot {
        path: format!("{prefix}.conv.bias"),
        kind: ParamKind::ConvBias,
        values: &mut b.conv.bias.values,
        grad: &mut b.conv.bias.grad,
    })?;
    f(ParamSlot {
        path: format!("{prefix}.bn.gamma"),
        kind: ParamKind::BnGamma,
        values: &mut b.bn.gamma.values,
        grad: &mut b.bn.gamma.grad,
    })?;
    f(ParamSlot {
        path: format!("{prefix}.bn.beta"),
        kind: ParamKind::BnBeta,
        values: &mut b.bn.beta.values,
        grad: &mut b.bn.beta.grad,
    })?;
    f(ParamSlot {
        path: format!("{prefix}.prelu.slopes"),
        kind: ParamKind::PreluSlope,
        values: &mut b.act.slopes.values,
        grad: &mut b.act.slopes.grad,
    })
}

fn tensor_block(b: &ConvBlockState, prefix: &str, f: &mut impl FnMut(&str, &[usize], &[f32])) {
    let ws = b.conv.weights.shape();
    f(&format!("{prefix}.conv.weight"), &ws, b.conv.weights.data());
    f(&format!("{prefix}.conv.bias"), &[b.conv.bias.len()], &b.conv.bias.values);
    f(&format!("{prefix}.bn.gamma"), &[b.bn.gamma.len()], &b.bn.gamma.values);
    f(&format!("{prefix}.bn.beta"), &[b.bn.beta.len()], &b.bn.beta.values);
    f(&format!("{prefix}.bn.running_mean"), &[b.bn.channels], &b.bn.running_mean);
    f(&format!("{prefix}.bn.running_var"), &[b.bn.channels], &b.bn.running_var);
    f(&format!("{prefix}.prelu.slopes"), &[b.act.slopes.len()], &b.act.slopes.values);
}

fn tensor_block_mut(
    b: &mut ConvBlockState,
    prefix: &str,
    f: &mut impl FnMut(&str, &mut Vec<f32>) -> Result<()>,
) -> Result<()> {
    f(&format!("{prefix}.conv.weight"), b.conv.weights.data_vec_mut())?;
    f(&format!("{prefix}.conv.bias"), &mut b.conv.bias.values)?;
    f(&format!("{prefix}.bn.gamma"), &mut b.bn.gamma.values)?;
    f(&format!("{prefix}.bn.beta"), &mut b.bn.beta.values)?;
    f(&format!("{prefix}.bn.running_mean"), &mut b.bn.running_mean)?;
    f(&format!("{prefix}.bn.running_var"), &mut b.bn.running_var)?;
    f(&format!("{prefix}.prelu.slopes"), &mut b.act.slopes.values)
}

impl NetworkState {
    /// Checked write of a gradient into a parameter found by path walk; used
    /// by the executor's backward pass.
    pub(crate) fn expect_block_mut(&mut self, lane: usize, layer: usize) -> &mut ConvBlockState {
        match &mut self.lanes[lane][layer] {
            LayerState::Block(b) => b,
            LayerState::MaxPool => panic!("layer {layer} in lane {lane} is a pool, not a block"),
        }
    }
}

impl std::fmt::Display for ParamKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ParamKind::ConvWeight => "conv.weight",
            ParamKind::ConvBias => "conv.bias",
            ParamKind::FcWeight => "fc.weight",
            ParamKind::FcBias => "fc.bias",
            ParamKind::BnGamma => "bn.gamma",
            ParamKind::BnBeta => "bn.beta",
            ParamKind::PreluSlope => "prelu.slopes",
        };
        f.write_str(s)
    }
}
