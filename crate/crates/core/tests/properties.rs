//! Property tests for the crate-wide invariants.

use proptest::prelude::*;

use surfclass::data::{train_preprocess, GrayImage, PreprocessConfig};
use surfclass::ops::{concat_channels, logsoftmax_nll, residual_add, split_channels, ConvParams};
use surfclass::rng;
use surfclass::train::{lr_at, TrainConfig};
use surfclass::Tensor;

fn tensor_strategy(
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> impl Strategy<Value = Tensor> {
    proptest::collection::vec(-10.0f32..10.0, n * c * h * w)
        .prop_map(move |data| Tensor::from_vec([n, c, h, w], data).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// concat then split reproduces every lane bit-exactly.
    #[test]
    fn concat_split_roundtrip(
        a in tensor_strategy(2, 1, 3, 4),
        b in tensor_strategy(2, 3, 3, 4),
        c in tensor_strategy(2, 2, 3, 4),
    ) {
        let cat = concat_channels(&[&a, &b, &c]).unwrap();
        prop_assert_eq!(cat.shape(), [2, 6, 3, 4]);
        let parts = split_channels(&cat, &[1, 3, 2]).unwrap();
        prop_assert_eq!(parts[0].data(), a.data());
        prop_assert_eq!(parts[1].data(), b.data());
        prop_assert_eq!(parts[2].data(), c.data());
    }

    /// Residual addition against a zero branch is exactly the identity, and
    /// gradient mass through concat/split is conserved.
    #[test]
    fn residual_identity_and_mass(x in tensor_strategy(1, 2, 4, 4)) {
        let zero = Tensor::zeros(1, 2, 4, 4);
        let out = residual_add(&x, &zero).unwrap();
        prop_assert_eq!(out.data(), x.data());

        let parts = split_channels(&x, &[1, 1]).unwrap();
        let mass: f64 = x.data().iter().map(|&v| v as f64).sum();
        let split_mass: f64 = parts.iter().flat_map(|p| p.data()).map(|&v| v as f64).sum();
        prop_assert!((mass - split_mass).abs() < 1e-3);
    }

    /// Per-sample log-softmax gradients sum to zero and the loss is finite
    /// for any finite logits.
    #[test]
    fn nll_gradient_rows_sum_to_zero(
        logits in tensor_strategy(3, 5, 1, 1),
        t0 in 0usize..5, t1 in 0usize..5, t2 in 0usize..5,
    ) {
        let (loss, grad) = logsoftmax_nll(&logits, &[t0, t1, t2]).unwrap();
        prop_assert!(loss.is_finite());
        for i in 0..3 {
            let s: f32 = grad.data()[i * 5..(i + 1) * 5].iter().sum();
            prop_assert!(s.abs() < 1e-6, "row {} sums to {}", i, s);
        }
    }

    /// The LR schedule is piecewise constant with breakpoints exactly at
    /// multiples of the step length.
    #[test]
    fn lr_schedule_is_piecewise_constant(
        step in 1usize..10,
        mult in 0.1f64..=1.0,
        epoch in 0usize..100,
    ) {
        let cfg = TrainConfig {
            lr_step_epochs: step,
            lr_multiplier: mult,
            ..TrainConfig::default()
        };
        let expect = cfg.base_lr * mult.powi((epoch / step) as i32);
        prop_assert_eq!(lr_at(&cfg, epoch), expect);
        if epoch % step != 0 {
            prop_assert_eq!(lr_at(&cfg, epoch), lr_at(&cfg, epoch - 1));
        } else if epoch > 0 && mult < 1.0 {
            prop_assert!(lr_at(&cfg, epoch) < lr_at(&cfg, epoch - 1));
        }
    }

    /// Convolution output sizes follow floor((d + 2p - k)/s) + 1 for every
    /// kernel/stride/padding combination the networks use.
    #[test]
    fn conv_output_size_formula(side in 6usize..80, combo in 0usize..3) {
        let (k, s, p) = [(5usize, 2usize, 2usize), (3, 2, 1), (1, 1, 0)][combo];
        let params = ConvParams::new(1, 1, k, s, p).unwrap();
        let (oh, ow) = params.output_hw(side, side).unwrap();
        prop_assert_eq!(oh, (side + 2 * p - k) / s + 1);
        prop_assert_eq!(ow, oh);
        // Stride-2 combos halve even sides exactly.
        if s == 2 && side % 2 == 0 {
            prop_assert_eq!(oh, side / 2);
        }
    }

    /// Training preprocessing emits a fixed shape with every value in [0,1]
    /// for any input geometry.
    #[test]
    fn preprocess_shape_and_range(
        w in 40usize..120,
        h in 40usize..120,
        seed in 0u64..500,
    ) {
        let mut r = rng::derive(seed, 0x77);
        let pixels = (0..w * h).map(|_| (seed as usize + 3 * (w + h)) as u8).collect();
        let img = GrayImage::from_pixels(w, h, pixels).unwrap();
        let cfg = PreprocessConfig::for_side(32);
        let t = train_preprocess(&img, &cfg, &mut r);
        prop_assert_eq!(t.shape(), [1, 1, 32, 32]);
        prop_assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
