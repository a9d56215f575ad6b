//! Builders for the three architectures.
//!
//! Channel plans are overridable; the defaults below are sized for CPU
//! execution rather than copied from any reference hardware, with the
//! FastInf head kept at 1024 channels.

use crate::error::{Error, Result};
use crate::network::spec::{LayerSpec, MergeSpec, NetworkSpec};
use crate::network::state::NetworkState;

/// Default SurfNet channels: alternating 5x5/2 and shortcut-wrapped 1x1
/// stages, widening toward the final 1x1 stack.
pub const SURFNET_CHANNELS: [usize; 9] = [32, 32, 64, 64, 128, 128, 128, 128, 128];

/// Default FastInf channels: thin early stages feeding the wide 1024-channel
/// final conv, so the three-layer net stays the latency floor on CPU.
pub const FASTINF_CHANNELS: [usize; 3] = [8, 8, 1024];

/// MultiVis lane plans: lanes A and B are five conv blocks, lane C is three
/// conv blocks with a max-pool between the last two.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiVisPlan {
    pub lane_a: [usize; 5],
    pub lane_b: [usize; 5],
    pub lane_c: [usize; 3],
    pub merge_channels: usize,
}

impl Default for MultiVisPlan {
    fn default() -> Self {
        MultiVisPlan {
            lane_a: [48, 48, 96, 96, 64],
            lane_b: [48, 48, 96, 96, 64],
            lane_c: [48, 48, 64],
            merge_channels: 128,
        }
    }
}

fn conv(k: usize, s: usize, p: usize, i: usize, o: usize, shortcut: bool) -> LayerSpec {
    LayerSpec::ConvBlock {
        kernel: k,
        stride: s,
        padding: p,
        in_channels: i,
        out_channels: o,
        shortcut,
    }
}

fn finish(spec: NetworkSpec, seed: u64) -> Result<(NetworkSpec, NetworkState)> {
    spec.shape_walk()?;
    let state = NetworkState::init(&spec, seed)?;
    Ok((spec, state))
}

/// SurfNet: nine conv layers and one FC head. The first six alternate
/// 5x5/stride-2 feature extraction with shortcut-wrapped 1x1 blocks, then
/// three more shortcut-wrapped 1x1 blocks; three stride-2 stages downsample
/// the input by 8 in total.
pub fn build_surfnet(
    channels: &[usize],
    input_side: usize,
    class_count: usize,
    seed: u64,
) -> Result<(NetworkSpec, NetworkState)> {
    let plan: [usize; 9] = channels.try_into().map_err(|_| {
        Error::Build(format!(
            "surfnet channel plan needs 9 entries, got {}",
            channels.len()
        ))
    })?;
    let lane = vec![
        conv(5, 2, 2, 1, plan[0], false),
        conv(1, 1, 0, plan[0], plan[1], true),
        conv(5, 2, 2, plan[1], plan[2], false),
        conv(1, 1, 0, plan[2], plan[3], true),
        conv(5, 2, 2, plan[3], plan[4], false),
        conv(1, 1, 0, plan[4], plan[5], true),
        conv(1, 1, 0, plan[5], plan[6], true),
        conv(1, 1, 0, plan[6], plan[7], true),
        conv(1, 1, 0, plan[7], plan[8], true),
    ];
    let spec = NetworkSpec {
        name: "surfnet".into(),
        input_side,
        in_channels: 1,
        class_count,
        lanes: vec![lane],
        merge: None,
    };
    finish(spec, seed)
}

/// FastInf: three conv blocks (3x3/2, 1x1, 3x3/2) and the FC head.
pub fn build_fastinf(
    channels: &[usize],
    input_side: usize,
    class_count: usize,
    seed: u64,
) -> Result<(NetworkSpec, NetworkState)> {
    let plan: [usize; 3] = channels.try_into().map_err(|_| {
        Error::Build(format!(
            "fastinf channel plan needs 3 entries, got {}",
            channels.len()
        ))
    })?;
    let lane = vec![
        conv(3, 2, 1, 1, plan[0], false),
        conv(1, 1, 0, plan[0], plan[1], false),
        conv(3, 2, 1, plan[1], plan[2], false),
    ];
    let spec = NetworkSpec {
        name: "fastinf".into(),
        input_side,
        in_channels: 1,
        class_count,
        lanes: vec![lane],
        merge: None,
    };
    finish(spec, seed)
}

/// MultiVis: three parallel lanes at different receptive-field scales, all
/// downsampling by 8, concatenated and fused by a 1x1 merge block before
/// the FC head.
pub fn build_multivis(
    plan: &MultiVisPlan,
    input_side: usize,
    class_count: usize,
    seed: u64,
) -> Result<(NetworkSpec, NetworkState)> {
    let a = &plan.lane_a;
    let b = &plan.lane_b;
    let c = &plan.lane_c;
    let lane_a = vec![
        conv(3, 2, 1, 1, a[0], false),
        conv(1, 1, 0, a[0], a[1], false),
        conv(3, 2, 1, a[1], a[2], false),
        conv(1, 1, 0, a[2], a[3], false),
        conv(3, 2, 1, a[3], a[4], false),
    ];
    let lane_b = vec![
        conv(5, 2, 2, 1, b[0], false),
        conv(1, 1, 0, b[0], b[1], false),
        conv(5, 2, 2, b[1], b[2], false),
        conv(1, 1, 0, b[2], b[3], false),
        conv(3, 2, 1, b[3], b[4], false),
    ];
    let lane_c = vec![
        conv(3, 2, 1, 1, c[0], false),
        conv(1, 1, 0, c[0], c[1], false),
        LayerSpec::MaxPool2,
        conv(3, 2, 1, c[1], c[2], false),
    ];
    let concat = a[4] + b[4] + c[2];
    let spec = NetworkSpec {
        name: "multivis".into(),
        input_side,
        in_channels: 1,
        class_count,
        lanes: vec![lane_a, lane_b, lane_c],
        merge: Some(MergeSpec {
            in_channels: concat,
            out_channels: plan.merge_channels,
        }),
    };
    finish(spec, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surfnet_128_ends_at_16x16() {
        let (spec, _) = build_surfnet(&SURFNET_CHANNELS, 128, 2, 0).unwrap();
        let walk = spec.shape_walk().unwrap();
        assert_eq!(walk.features, (128, 16, 16));
    }

    #[test]
    fn surfnet_64_ends_at_8x8() {
        let (spec, _) = build_surfnet(&SURFNET_CHANNELS, 64, 6, 0).unwrap();
        let walk = spec.shape_walk().unwrap();
        assert_eq!(walk.features, (128, 8, 8));
    }

    #[test]
    fn surfnet_is_nine_convs_with_six_shortcuts() {
        let (spec, _) = build_surfnet(&SURFNET_CHANNELS, 128, 2, 0).unwrap();
        assert_eq!(spec.conv_count(), 9);
        let shortcuts = spec.lanes[0]
            .iter()
            .filter(|l| matches!(l, LayerSpec::ConvBlock { shortcut: true, .. }))
            .count();
        assert_eq!(shortcuts, 6);
        // Every 1x1 layer is shortcut-wrapped, every 5x5 is not.
        for layer in &spec.lanes[0] {
            if let LayerSpec::ConvBlock { kernel, shortcut, .. } = layer {
                assert_eq!(*shortcut, *kernel == 1);
            }
        }
    }

    #[test]
    fn surfnet_bad_plan_rejected() {
        assert!(build_surfnet(&[32, 32], 128, 2, 0).is_err());
        // Shortcut with in != out channels.
        let bad = [32, 48, 64, 64, 128, 128, 128, 128, 128];
        assert!(build_surfnet(&bad, 128, 2, 0).is_err());
    }

    #[test]
    fn fastinf_128_ends_at_32x32() {
        let (spec, _) = build_fastinf(&FASTINF_CHANNELS, 128, 2, 0).unwrap();
        let walk = spec.shape_walk().unwrap();
        assert_eq!(walk.features, (1024, 32, 32));
        assert_eq!(spec.conv_count(), 3);
    }

    #[test]
    fn multivis_lanes_agree_and_concat() {
        let plan = MultiVisPlan::default();
        let (spec, _) = build_multivis(&plan, 128, 2, 0).unwrap();
        let walk = spec.shape_walk().unwrap();
        for shapes in &walk.lane_shapes {
            let (_, h, w) = shapes.last().unwrap();
            assert_eq!((*h, *w), (16, 16));
        }
        assert_eq!(walk.features, (128, 16, 16));
    }

    #[test]
    fn multivis_pool_needs_even_input() {
        // Side 25 leaves lane C with an odd 13x13 map in front of the pool.
        let plan = MultiVisPlan::default();
        assert!(build_multivis(&plan, 25, 2, 0).is_err());
    }
}
