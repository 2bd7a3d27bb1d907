use pcsc::codec::{Codec, CodecConfig, DEFAULT_ZETA};
use pcsc::pointcloud::{ShapeKind, Surface};
use pcsc::rate::{
    apply_mask, build_mask, cbr, drop_count, importance, recover, ImportanceContext, ImportanceMethod, RateMask,
};
use pcsc::voxel::{partition, Cube};
use proptest::prelude::*;

fn sample_cube() -> Cube {
    let pc = Surface::for_kind(ShapeKind::Torus, 5, 2).sample(20_000, 5, 3).unwrap();
    partition(&pc, 8)
        .unwrap()
        .into_iter()
        .max_by_key(|c| c.k_occupied())
        .unwrap()
}

fn wbce(logits: &[f64], occ: &[bool], zeta: f64) -> f64 {
    let (mut pos, mut neg, mut no, mut nn) = (0.0, 0.0, 0, 0);
    for (&z, &o) in logits.iter().zip(occ) {
        let p = 1.0 / (1.0 + (-z).exp());
        if o {
            pos -= p.ln();
            no += 1;
        } else {
            neg -= (1.0 - p).ln();
            nn += 1;
        }
    }
    pos / no as f64 + zeta * neg / nn as f64
}

#[test]
fn cbr_examples() {
    assert_eq!(cbr(256, 16).unwrap(), 0.0625);
    assert_eq!(cbr(128, 16).unwrap(), 0.03125);
    assert!(cbr(4096, 16).is_err());
}

#[test]
fn drop_count_examples() {
    assert_eq!(drop_count(256, 0.3), 76);
    assert_eq!(drop_count(256, 0.5), 128);
    assert_eq!(drop_count(10, 0.0), 0);
    assert!(build_mask(&[1.0, 2.0], 1.0).is_err());
    assert!(build_mask(&[f64::NAN, 2.0], 0.5).is_err());
}

#[test]
fn mask_bytes_reject_wrong_lengths() {
    assert!(RateMask::from_bytes(&[1, 0]).is_err());
    assert!(RateMask::from_bytes(&[9, 0, 0, 0, 0]).is_err());
    let m = RateMask::from_bytes(&[3, 0, 0, 0, 0b101]).unwrap();
    assert_eq!(m.bits(), &[true, false, true]);
}

#[test]
fn gradient_methods_need_a_model() {
    let y = pcsc::codec::LatentVector::new(vec![1.0; 4], [1, 1, 2, 2]).unwrap();
    let ctx = ImportanceContext::<f32>::default();
    assert!(importance(&y, ImportanceMethod::Grad, &ctx).is_err());
    assert!(importance(&y, ImportanceMethod::Value, &ctx).is_ok());
}

#[test]
fn random_scores_follow_the_seed() {
    let y = pcsc::codec::LatentVector::new(vec![1.0; 16], [1, 1, 4, 4]).unwrap();
    let at = |seed| {
        let ctx = ImportanceContext::<f32> {
            seed,
            ..Default::default()
        };
        importance(&y, ImportanceMethod::Random, &ctx).unwrap()
    };
    assert_eq!(at(1), at(1));
    assert_ne!(at(1), at(2));
}

#[test]
fn latent_gradient_matches_finite_differences() {
    let codec = Codec::<f32>::new(CodecConfig {
        side: 8,
        widths: [4, 8, 8],
        blocks_per_stage: 1,
        latent_channels: 2,
        seed: 5,
    })
    .unwrap()
    .cast::<f64>();
    let cube = sample_cube();
    let y = codec.encode(&cube).unwrap();
    let ctx = ImportanceContext {
        model: Some((&codec, &cube)),
        ..Default::default()
    };
    let g = codec.latent_gradient(&y, &cube, DEFAULT_ZETA).unwrap();
    let gv = importance(&y, ImportanceMethod::GradValue, &ctx).unwrap();
    let loss = |values: Vec<f64>| {
        let z = codec.decode(&y.with_values(values).unwrap()).unwrap();
        wbce(&z, cube.occupancy(), DEFAULT_ZETA)
    };
    let h = 1e-5;
    let mut good = 0;
    for i in 0..y.len() {
        let mut plus = y.values.clone();
        plus[i] += h;
        let mut minus = y.values.clone();
        minus[i] -= h;
        let numeric = (loss(plus) - loss(minus)) / (2.0 * h);
        let diff = (numeric - g[i]).abs();
        // A ReLU can switch inside the probe interval; those entries are
        // rare and excluded by the count below.
        if diff < 1e-8 || diff / numeric.abs().max(g[i].abs()) < 1e-4 {
            good += 1;
        }
        assert!((gv[i] - (g[i] * y.values[i]).abs()).abs() < 1e-12);
    }
    assert!(good as f64 >= 0.95 * y.len() as f64, "{good} of {}", y.len());
}

proptest! {
    #[test]
    fn mask_matches_full_sort_oracle(
        scores in prop::collection::vec(0u8..6, 1..80),
        ratio in 0.0f64..0.99,
    ) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let mask = build_mask(&scores, ratio).unwrap();
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
        let drop = (scores.len() as f64 * ratio + 1e-9).floor() as usize;
        let mut expect = vec![true; scores.len()];
        for &i in &order[..drop] {
            expect[i] = false;
        }
        prop_assert_eq!(mask.bits(), expect.as_slice());
        prop_assert_eq!(mask.len() - mask.kept(), drop_count(scores.len(), ratio));
    }

    #[test]
    fn value_mask_is_scale_invariant(
        values in prop::collection::vec(-10.0f64..10.0, 1..64),
        c in prop::sample::select(vec![-4.0, -0.5, 0.25, 2.0, 8.0]),
        ratio in 0.0f64..0.99,
    ) {
        let layout = [1, 1, 1, values.len()];
        let y = pcsc::codec::LatentVector::new(values.clone(), layout).unwrap();
        let scaled = y.with_values(values.iter().map(|v| c * v).collect()).unwrap();
        let ctx = ImportanceContext::<f32>::default();
        let a = build_mask(&importance(&y, ImportanceMethod::Value, &ctx).unwrap(), ratio).unwrap();
        let b = build_mask(&importance(&scaled, ImportanceMethod::Value, &ctx).unwrap(), ratio).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn recover_inverts_apply(
        values in prop::collection::vec(-5.0f64..5.0, 1..64),
        bits in prop::collection::vec(any::<bool>(), 64),
    ) {
        let mask = RateMask::new(bits[..values.len()].to_vec());
        let sent = apply_mask(&values, &mask).unwrap();
        prop_assert_eq!(sent.len(), mask.kept());
        let back = recover(&sent, &mask).unwrap();
        for ((b, v), &keep) in back.iter().zip(&values).zip(mask.bits()) {
            prop_assert_eq!(*b, if keep { *v } else { 0.0 });
        }
        prop_assert_eq!(RateMask::from_bytes(&mask.to_bytes()).unwrap(), mask);
    }
}
