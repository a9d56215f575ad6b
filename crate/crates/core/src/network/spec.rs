//! Declarative network descriptions and their shape arithmetic.

use crate::error::{Error, Result};

/// One layer in a lane. Every conv is a full block
/// (conv -> batch norm -> PReLU); a shortcut adds the block input to the
/// block output after the activation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    ConvBlock {
        kernel: usize,
        stride: usize,
        padding: usize,
        in_channels: usize,
        out_channels: usize,
        shortcut: bool,
    },
    MaxPool2,
}

/// Optional 1x1 merge block applied after lane concatenation (MultiVis).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeSpec {
    pub in_channels: usize,
    pub out_channels: usize,
}

/// Full network description: one lane for SurfNet/FastInf, three for
/// MultiVis, then an optional merge block and the FC head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub name: String,
    pub input_side: usize,
    pub in_channels: usize,
    pub class_count: usize,
    pub lanes: Vec<Vec<LayerSpec>>,
    pub merge: Option<MergeSpec>,
}

/// Layer-by-layer (channels, height, width) predictions for every lane.
#[derive(Debug, Clone)]
pub struct ShapeWalk {
    /// Shape after each layer of each lane.
    pub lane_shapes: Vec<Vec<(usize, usize, usize)>>,
    /// Feature shape entering the FC head (after concat + merge).
    pub features: (usize, usize, usize),
    /// Flattened FC input length.
    pub fc_in: usize,
}

fn conv_out_side(side: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = side + 2 * padding;
    if padded < kernel {
        return Err(Error::Build(format!(
            "spatial side {side} with padding {padding} is smaller than kernel {kernel}"
        )));
    }
    let out = (padded - kernel) / stride + 1;
    if out == 0 {
        return Err(Error::Build(format!(
            "conv output side collapsed to zero at input side {side}"
        )));
    }
    Ok(out)
}

impl NetworkSpec {
    /// Predicts every intermediate shape and checks the wiring invariants:
    /// channel continuity, 1x1-only shortcuts with matching channels,
    /// even-sized pool inputs, and identical lane output shapes.
    pub fn shape_walk(&self) -> Result<ShapeWalk> {
        if self.lanes.is_empty() {
            return Err(Error::Build("network needs at least one lane".into()));
        }
        if self.class_count < 2 {
            return Err(Error::Build("class_count must be >= 2".into()));
        }
        let mut lane_shapes = Vec::with_capacity(self.lanes.len());
        for (li, lane) in self.lanes.iter().enumerate() {
            let mut shapes = Vec::with_capacity(lane.len());
            let (mut c, mut h, mut w) = (self.in_channels, self.input_side, self.input_side);
            for (i, layer) in lane.iter().enumerate() {
                match *layer {
                    LayerSpec::ConvBlock {
                        kernel,
                        stride,
                        padding,
                        in_channels,
                        out_channels,
                        shortcut,
                    } => {
                        if in_channels != c {
                            return Err(Error::Build(format!(
                                "lane {li} layer {i}: expects {in_channels} input channels, gets {c}"
                            )));
                        }
                        if shortcut && kernel != 1 {
                            return Err(Error::Build(format!(
                                "lane {li} layer {i}: shortcuts wrap 1x1 blocks only, got kernel {kernel}"
                            )));
                        }
                        if shortcut && in_channels != out_channels {
                            return Err(Error::Build(format!(
                                "lane {li} layer {i}: shortcut over channel-changing layer ({in_channels} -> {out_channels})"
                            )));
                        }
                        h = conv_out_side(h, kernel, stride, padding)?;
                        w = conv_out_side(w, kernel, stride, padding)?;
                        c = out_channels;
                    }
                    LayerSpec::MaxPool2 => {
                        if h % 2 != 0 || w % 2 != 0 {
                            return Err(Error::Build(format!(
                                "lane {li} layer {i}: maxpool needs even dims, got {h}x{w}"
                            )));
                        }
                        h /= 2;
                        w /= 2;
                    }
                }
                shapes.push((c, h, w));
            }
            if shapes.is_empty() {
                return Err(Error::Build(format!("lane {li} is empty")));
            }
            lane_shapes.push(shapes);
        }

        let first = *lane_shapes[0].last().expect("non-empty lane");
        for (li, shapes) in lane_shapes.iter().enumerate().skip(1) {
            let (_, h, w) = *shapes.last().expect("non-empty lane");
            if (h, w) != (first.1, first.2) {
                return Err(Error::Build(format!(
                    "lane {li} ends at {h}x{w}, lane 0 ends at {}x{}",
                    first.1, first.2
                )));
            }
        }

        let concat_channels: usize = lane_shapes
            .iter()
            .map(|s| s.last().expect("non-empty lane").0)
            .sum();
        let features = match &self.merge {
            Some(m) => {
                if m.in_channels != concat_channels {
                    return Err(Error::Build(format!(
                        "merge block expects {} channels, concat provides {concat_channels}",
                        m.in_channels
                    )));
                }
                (m.out_channels, first.1, first.2)
            }
            None => {
                if self.lanes.len() > 1 {
                    return Err(Error::Build(
                        "multi-lane network requires a merge block".into(),
                    ));
                }
                (concat_channels, first.1, first.2)
            }
        };

        Ok(ShapeWalk {
            lane_shapes,
            fc_in: features.0 * features.1 * features.2,
            features,
        })
    }

    /// Number of convolution layers across all lanes plus the merge block.
    pub fn conv_count(&self) -> usize {
        let lanes: usize = self
            .lanes
            .iter()
            .flatten()
            .filter(|l| matches!(l, LayerSpec::ConvBlock { .. }))
            .count();
        lanes + usize::from(self.merge.is_some())
    }

    /// Learnable tensor count implied by the description alone: five per conv
    /// block (weights, bias, gamma, beta, slopes) plus two for the FC head.
    pub fn learnable_tensor_count(&self) -> usize {
        self.conv_count() * 5 + 2
    }

    /// Stable 64-bit fingerprint of the canonical description; stored in
    /// checkpoints so a file cannot be loaded into a different architecture.
    pub fn fingerprint(&self) -> u64 {
        let mut text = format!(
            "{}|side={}|in={}|classes={}",
            self.name, self.input_side, self.in_channels, self.class_count
        );
        for lane in &self.lanes {
            text.push_str("|lane:");
            for layer in lane {
                match *layer {
                    LayerSpec::ConvBlock {
                        kernel,
                        stride,
                        padding,
                        in_channels,
                        out_channels,
                        shortcut,
                    } => {
                        text.push_str(&format!(
                            "c{kernel}s{stride}p{padding}i{in_channels}o{out_channels}r{};",
                            u8::from(shortcut)
                        ));
                    }
                    LayerSpec::MaxPool2 => text.push_str("pool;"),
                }
            }
        }
        if let Some(m) = &self.merge {
            text.push_str(&format!("|merge:i{}o{}", m.in_channels, m.out_channels));
        }
        fnv1a64(text.as_bytes())
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
