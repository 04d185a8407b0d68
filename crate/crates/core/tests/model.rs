//! Forward-pass laws: shapes, ranges, determinism, pooling consistency,
//! padding neutrality and gradient flow through the whole network.

use amn_core::affinity::{GradMode, Placement};
use amn_core::audio::MelSpectrogram;
use amn_core::model::{init_params, pool, Model, ModelConfig, Pooling};
use amn_core::train::bce_loss;
use amn_tensor::{BatchNormMode, Graph, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(placement: Placement) -> ModelConfig {
    let mut cfg = ModelConfig::desk(4);
    cfg.am.placement = placement;
    cfg
}

fn features(t: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn([t, 64], |_| rng.random_range(-4.0..1.0))
}

fn mel(x: &Tensor<f64>) -> MelSpectrogram {
    MelSpectrogram { frames: x.cast() }
}

/// A model whose batch-norm running statistics are not the identity.
fn warmed(cfg: ModelConfig, seed: u64) -> Model<f64> {
    let mut m = Model::<f64>::new(cfg, seed).unwrap();
    let x = features(24, seed + 100).reshape([1, 24, 64]).unwrap();
    for _ in 0..3 {
        let g = Graph::new();
        m.forward(&g, &x, &[24], BatchNormMode::Train, false)
            .unwrap();
    }
    m
}

/// Clip probabilities for each clip when batched together and zero-padded.
fn batched(m: &Model<f64>, clips: &[Tensor<f64>], t: usize) -> Vec<Vec<f64>> {
    let n = clips.len();
    let mut data = vec![0.0; n * t * 64];
    for (s, c) in clips.iter().enumerate() {
        data[s * t * 64..s * t * 64 + c.numel()].copy_from_slice(c.data());
    }
    let valid: Vec<usize> = clips.iter().map(|c| c.shape()[0]).collect();
    let g = Graph::new();
    let out = m
        .forward_eval(&g, &Tensor::new([n, t, 64], data).unwrap(), &valid)
        .unwrap();
    let p = out.clip_probs.value();
    p.data()
        .chunks(m.config.classes)
        .map(<[f64]>::to_vec)
        .collect()
}

#[test]
fn shape_law_for_full_size_input() {
    let m = Model::<f32>::new(ModelConfig::desk(10), 0).unwrap();
    let pred = m.predict(&mel(&features(500, 1))).unwrap();
    assert_eq!(pred.probs.shape(), &[500, 10]);
    assert_eq!(pred.clip_probs.shape(), &[10]);
    assert_eq!(pred.valid_frames, 500);
}

#[test]
fn shape_law_across_lengths() {
    let m = Model::<f64>::new(config(Placement::FULL), 3).unwrap();
    for t in [4, 8, 12, 36, 100] {
        let pred = m.predict(&mel(&features(t, t as u64))).unwrap();
        assert_eq!(pred.probs.shape(), &[t, 4], "t={t}");
        assert_eq!(pred.clip_probs.shape(), &[4]);
        assert!(pred
            .probs
            .data()
            .iter()
            .chain(pred.clip_probs.data())
            .all(|p| (0.0..=1.0).contains(p)));
    }
}

#[test]
fn lengths_not_divisible_by_four_still_map_one_to_one() {
    let m = Model::<f64>::new(config(Placement::FULL), 3).unwrap();
    for t in [1, 5, 13, 99] {
        assert_eq!(
            m.predict(&mel(&features(t, 2))).unwrap().probs.shape(),
            &[t, 4]
        );
    }
}

#[test]
fn eval_is_bit_deterministic() {
    let m = warmed(config(Placement::FULL), 5);
    let x = mel(&features(40, 9));
    assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
}

#[test]
fn init_is_seeded() {
    let cfg = ModelConfig::desk(10);
    let a = init_params::<f32>(&cfg, 7).unwrap();
    assert_eq!(a, init_params::<f32>(&cfg, 7).unwrap());
    assert_ne!(a.tensors, init_params::<f32>(&cfg, 8).unwrap().tensors);
    for (name, t) in a.names.iter().zip(&a.tensors) {
        if name.ends_with("bias") || name.contains(".b_") || name.ends_with("beta") {
            assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
        }
    }
}

#[test]
fn zero_input_smoke() {
    let m = Model::<f64>::new(ModelConfig::desk(10), 0).unwrap();
    let pred = m.predict(&mel(&Tensor::zeros([64, 64]))).unwrap();
    assert!(pred.clip_probs.data().iter().all(|&p| p > 0.0 && p < 1.0));
}

#[test]
fn no_am_is_independent_of_affinity_settings() {
    let x = mel(&features(48, 4));
    let base = warmed(config(Placement::NONE), 11);
    let reference = base.predict(&x).unwrap();
    assert!(reference
        .probs
        .data()
        .iter()
        .all(|p| p.is_finite() && (0.0..=1.0).contains(p)));
    for tau in [0.05, 1.0, 5.0] {
        for mode in GradMode::ALL {
            let mut m = base.clone();
            m.config.am.tau = tau;
            m.config.am.grad_mode = mode;
            assert_eq!(m.predict(&x).unwrap(), reference, "tau={tau} mode={mode:?}");
        }
    }
    let g = Graph::new();
    let out = base
        .forward_eval(
            &g,
            &x.frames.cast::<f64>().reshape([1, 48, 64]).unwrap(),
            &[48],
        )
        .unwrap();
    assert_eq!(out.affinity_builds, [0, 0]);
}

#[test]
fn affinity_built_once_per_resolution() {
    let x = features(32, 1).reshape([1, 32, 64]).unwrap();
    for (placement, want) in [
        (Placement::FULL, [1, 1]),
        (
            Placement {
                encoder: [true, false],
                decoder: [false; 2],
            },
            [1, 0],
        ),
        (
            Placement {
                encoder: [false; 2],
                decoder: [false, true],
            },
            [0, 1],
        ),
    ] {
        let m = Model::<f64>::new(config(placement), 0).unwrap();
        let g = Graph::new();
        let out = m.forward_eval(&g, &x, &[32]).unwrap();
        assert_eq!(out.affinity_builds, want, "{placement}");
        let a = out.affinities[0].or(out.affinities[1]).unwrap();
        assert_eq!(a.shape()[1], 4, "one affinity per class");
    }
}

#[test]
fn clip_probs_equal_offline_pooling() {
    for pooling in [Pooling::LinearSoftmax, Pooling::Max] {
        let mut cfg = config(Placement::FULL);
        cfg.pooling = pooling;
        let m = warmed(cfg, 2);
        let pred = m.predict(&mel(&features(60, 3))).unwrap();
        let g = Graph::new();
        let q = g.constant(pred.probs.clone().reshape([1, 60, 4]).unwrap());
        let offline = pool(q, &[60], pooling).unwrap().value();
        for (a, b) in offline.data().iter().zip(pred.clip_probs.data()) {
            assert!((a - b).abs() < 1e-6, "{pooling}: {a} vs {b}");
        }
        if pooling == Pooling::Max {
            let soft = pool(q, &[60], Pooling::LinearSoftmax).unwrap().value();
            assert!(offline.data().iter().zip(soft.data()).all(|(m, s)| m >= s));
        }
    }
}

#[test]
fn padding_is_neutral_without_am() {
    let m = warmed(config(Placement::NONE), 6);
    let clips = [
        features(37, 1),
        features(64, 2),
        features(9, 3),
        features(3, 4),
    ];
    let alone: Vec<Vec<f64>> = clips
        .iter()
        .map(|c| m.predict(&mel(c)).unwrap().clip_probs.data().to_vec())
        .collect();
    for t in [64, 67, 80] {
        let together = batched(&m, &clips, t);
        for (s, (a, b)) in alone.iter().zip(&together).enumerate() {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-6, "t={t} clip {s}: {x} vs {y}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn appended_zero_frames_leave_clip_probs_unchanged(v in 1usize..48, extra in 1usize..24, seed in 0u64..100) {
        let m = warmed(config(Placement::NONE), seed);
        let x = features(v, seed + 1);
        let alone = m.predict(&mel(&x)).unwrap().clip_probs;
        let padded = batched(&m, std::slice::from_ref(&x), v + extra);
        for (a, b) in alone.data().iter().zip(&padded[0]) {
            prop_assert!((a - b).abs() < 1e-6, "v={v} extra={extra}: {a} vs {b}");
        }
    }

    #[test]
    fn probabilities_stay_in_unit_interval(t in 4usize..64, seed in 0u64..1000, tau in 0.05f64..5.0) {
        let mut cfg = config(Placement::FULL);
        cfg.am.tau = tau;
        let m = Model::<f64>::new(cfg, seed).unwrap();
        let pred = m.predict(&mel(&features(t, seed).map(|v| v * 3.0))).unwrap();
        prop_assert!(pred.probs.data().iter().chain(pred.clip_probs.data()).all(|p| (0.0..=1.0).contains(p)));
    }
}

/// Directional derivative of the training loss along a random direction
/// in parameter space against the backward pass. Biases start off zero,
/// which would park padded frames exactly on the leaky-ReLU kink, so they
/// are moved away from it first.
#[test]
fn gradients_flow_to_every_parameter() {
    let mut cfg = config(Placement::FULL);
    cfg.conv_channels = vec![4, 4, 4];
    cfg.gru_hidden = 4;
    let mut base = Model::<f64>::new(cfg, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (name, p) in base.params.names.iter().zip(base.params.tensors.iter_mut()) {
        if name.ends_with("bias") {
            *p = Tensor::from_fn(p.shape().to_vec(), |_| rng.random_range(-0.5..0.5));
        }
    }
    let x = Tensor::from_fn([2, 16, 64], |i| ((i * 7919 % 101) as f64 / 50.0) - 1.0);
    let y = Tensor::new([2, 4], vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
    let valid = [16, 12];
    let loss = |m: &Model<f64>| -> f64 {
        let mut m = m.clone();
        let g = Graph::new();
        let out = m
            .forward(&g, &x, &valid, BatchNormMode::Train, false)
            .unwrap();
        bce_loss(out.clip_probs, &y).unwrap().value().item()
    };

    let mut m = base.clone();
    let g = Graph::new();
    let out = m
        .forward(&g, &x, &valid, BatchNormMode::Train, true)
        .unwrap();
    let l = bce_loss(out.clip_probs, &y).unwrap();
    let grads = g.backward(l).unwrap();
    let mut analytic = 0.0;
    let mut dirs = Vec::new();
    for (name, &v) in base.params.names.iter().zip(&out.params) {
        let grad = grads
            .get(v)
            .unwrap_or_else(|| panic!("{name} got no gradient"));
        assert!(
            grad.data().iter().any(|&d| d != 0.0),
            "{name} gradient is identically zero"
        );
        let d = Tensor::from_fn(grad.shape().to_vec(), |_| rng.random_range(-1.0..1.0));
        analytic += grad
            .data()
            .iter()
            .zip(d.data())
            .map(|(a, b)| a * b)
            .sum::<f64>();
        dirs.push(d);
    }
    let h = 1e-6;
    let shifted = |sign: f64| {
        let mut m = base.clone();
        for (p, d) in m.params.tensors.iter_mut().zip(&dirs) {
            *p = p.zip_map(d, |a, b| a + sign * h * b).unwrap();
        }
        loss(&m)
    };
    let numeric = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
    let rel = (numeric - analytic).abs() / analytic.abs().max(1e-8);
    assert!(
        rel < 1e-5,
        "analytic {analytic} numeric {numeric} rel {rel}"
    );
}
