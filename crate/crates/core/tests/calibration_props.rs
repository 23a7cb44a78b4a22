mod common;

use common::calib::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stance_calib::calibration::*;
use stance_calib::corpus::{DatasetKind, StanceLabel};

#[test]
fn loss_is_the_sum_of_its_parts_and_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..100 {
        let model = small_model(&mut rng, 8);
        let batch = random_batch(&mut rng, 1 + i % 40);
        for (mode, literal) in [(CausalLossMode::FlippedLabelCe, false), (CausalLossMode::LiteralEq10, true)] {
            let parts = joint_loss(&batch, &model, mode).unwrap();
            assert!((parts.total - (parts.ce + parts.non_causal + parts.causal)).abs() <= 1e-9);
            let o = oracle_parts(&model, &batch, literal);
            assert!((parts.ce - o[0]).abs() <= 1e-9, "{} vs {}", parts.ce, o[0]);
            assert!((parts.non_causal - o[1]).abs() <= 1e-9);
            assert!((parts.causal - o[2]).abs() <= 1e-9);
        }
    }
}

#[test]
fn empty_strata_contribute_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = small_model(&mut rng, 6);
    let batch: Vec<CalibrationRecord> = random_batch(&mut rng, 30)
        .into_iter()
        .map(|mut r| {
            r.origin = Origin::Original;
            r
        })
        .collect();
    let parts = joint_loss(&batch, &model, CausalLossMode::FlippedLabelCe).unwrap();
    assert_eq!(parts.non_causal, 0.0);
    assert_eq!(parts.causal, 0.0);
    assert_eq!(parts.total, parts.ce);
}

#[test]
fn uniform_model_costs_ln_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = CalibratorModel::new(&TrainConfig::linear_bag(DatasetKind::Sem16)).unwrap();
    let batch = random_batch(&mut rng, 20);
    let parts = joint_loss(&batch, &model, CausalLossMode::FlippedLabelCe).unwrap();
    let strata = [Origin::Original, Origin::CadNonCausal, Origin::CadCausal]
        .iter()
        .filter(|o| batch.iter().any(|r| r.origin == **o))
        .count();
    assert!((parts.total - strata as f64 * 3f64.ln()).abs() < 1e-12);
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for mode in [CausalLossMode::FlippedLabelCe, CausalLossMode::LiteralEq10] {
        let model = small_model(&mut rng, 8);
        let batch = random_batch(&mut rng, 24);
        let worst = gradient_check(&mut rng, &model, &batch, mode, 100);
        assert!(worst <= 1e-4, "{mode:?}: {worst}");
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let records = random_batch(&mut rng, 120);
    let val = random_batch(&mut rng, 20);
    let config = TrainConfig {
        epochs: 3,
        hash_bits: 10,
        ..TrainConfig::linear_bag(DatasetKind::Sem16)
    };
    let a = train(&records, &val, &config, 7).unwrap();
    let b = train(&records, &val, &config, 7).unwrap();
    assert_eq!(a.model, b.model);
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&dir.path().join("a"), &a.model, &config).unwrap();
    save_checkpoint(&dir.path().join("b"), &b.model, &config).unwrap();
    for f in ["config.json", "weights.bin"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
    let (loaded, cfg) = load_checkpoint(&dir.path().join("a")).unwrap();
    assert_eq!(loaded, a.model);
    assert_eq!(cfg, config);
    let c = train(&records, &val, &config, 8).unwrap();
    assert_ne!(a.steps.iter().map(|s| s.loss_total).collect::<Vec<_>>(), c.steps.iter().map(|s| s.loss_total).collect::<Vec<_>>());
}

#[test]
fn training_reduces_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let records = random_batch(&mut rng, 200);
    let config = TrainConfig {
        epochs: 5,
        hash_bits: 10,
        ..TrainConfig::linear_bag(DatasetKind::Sem16)
    };
    let out = train(&records, &[], &config, 0).unwrap();
    assert!(out.epoch_loss.last().unwrap() < out.epoch_loss.first().unwrap());
    assert_eq!(out.best_epoch, config.epochs - 1);
}

#[test]
fn encoder_backend_is_reported_unavailable() {
    let err = CalibratorModel::new(&TrainConfig::default()).unwrap_err();
    assert!(matches!(err, CalibrationError::BackendUnavailable(Backend::Encoder)));
}

#[test]
fn pstance_model_rejects_neutral_records() {
    let model = CalibratorModel::new(&TrainConfig::linear_bag(DatasetKind::Pstance)).unwrap();
    let r = CalibrationRecord {
        input_text: "x".into(),
        label: StanceLabel::Neutral,
        origin: Origin::Original,
        parent_id: "p".into(),
    };
    assert!(matches!(encode(&model, &r), Err(CalibrationError::LabelOutsideOrder(..))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn probabilities_are_a_distribution(text in ".{0,200}", seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = small_model(&mut rng, 8);
        let (p, label) = predict(&model, &text);
        prop_assert_eq!(p.len(), 3);
        prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(model.label_order.contains(&label));
    }

    #[test]
    fn features_are_unit_norm(text in ".{1,200}") {
        let f = featurize(&text, 12);
        if !f.is_empty() {
            let norm: f64 = f.iter().map(|(_, v)| v * v).sum();
            prop_assert!((norm - 1.0).abs() < 1e-12);
            prop_assert!(f.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}
