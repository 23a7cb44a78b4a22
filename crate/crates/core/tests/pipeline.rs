use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stance_calib::bias_metrics::{macro_f1, PredictionLog};
use stance_calib::corpus::*;
use stance_calib::experiments::*;
use stance_calib::fixture::*;
use stance_calib::llm_gateway::*;
use stance_calib::prompting::{ParsePath, PromptKind, PromptVariant};

fn mock_gateway(dir: &Path) -> (Arc<ScriptedProvider>, Gateway) {
    let provider = Arc::new(SyntheticLlm::default().provider());
    let gw = Gateway::new(provider.clone(), dir, GatewayConfig::default()).unwrap();
    (provider, gw)
}

fn accuracy(log: &PredictionLog) -> f64 {
    log.entries.iter().filter(|e| e.gold == e.pred).count() as f64 / log.entries.len() as f64
}

#[test]
fn warm_cache_reproduces_judgments_without_calls() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_corpus(&FixtureSpec::default());
    let mut config = ExperimentConfig::new(DatasetKind::Sem16);
    config.seeds = vec![0];
    let (p1, gw1) = mock_gateway(dir.path());
    let cold = prepare(&config, &data, &gw1).unwrap();
    assert!(p1.calls() > 0);

    let (p2, gw2) = mock_gateway(dir.path());
    let warm = prepare(&config, &data, &gw2).unwrap();
    assert_eq!(p2.calls(), 0);
    let strip = |js: &[stance_calib::prompting::LlmJudgment]| {
        js.iter()
            .map(|j| (j.example_id.clone(), j.raw_response.clone(), j.parsed.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&cold.test_judgments), strip(&warm.test_judgments));
    assert_eq!(strip(&cold.train_judgments), strip(&warm.train_judgments));
    assert_eq!(cold.cads, warm.cads);
    assert!(warm.test_judgments.iter().all(|j| j.cached));
}

#[test]
fn adversarial_responses_exercise_every_parse_path() {
    let labels = [StanceLabel::Favor, StanceLabel::Against, StanceLabel::Neutral];
    let examples: Vec<StanceExample> = (0..20)
        .map(|i| StanceExample {
            id: format!("adv-{i}"),
            text: format!("adversarial item {i:03} about the topic"),
            target: "Atheism".into(),
            gold_stance: labels[i % 3],
            sentiment: Some(Sentiment::Neutral),
            dataset: DatasetKind::Sem16,
            split: Some(Split::Test),
        })
        .collect();
    let re = regex::Regex::new(r"adversarial item (\d{3})").unwrap();
    let provider = ScriptedProvider::with_responder(move |r| {
        let i: usize = re.captures(&r.prompt)?[1].parse().ok()?;
        Some(adversarial_response(i, labels[i % 3]))
    });
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::new(Arc::new(provider), dir.path(), GatewayConfig::default()).unwrap();
    let (js, stats) = stance_calib::experiments::run_inference(
        &examples,
        PromptKind::TaskDes,
        PromptVariant::JsonQuestion,
        None,
        &gw,
        &Decoding::new("m"),
    )
    .unwrap();
    assert_eq!(js.len(), 20);
    assert!(stats.json_block >= 1 && stats.keyword_fallback >= 1 && stats.failed_default >= 1, "{stats:?}");
    for (ex, j) in examples.iter().zip(&js) {
        assert_eq!(j.example_id, ex.id);
        if j.parsed.parse_path != ParsePath::FailedDefault {
            assert_eq!(j.parsed.stance, ex.gold_stance);
        }
    }
}

#[test]
fn empty_split_gives_empty_inference() {
    let dir = tempfile::tempdir().unwrap();
    let (provider, gw) = mock_gateway(dir.path());
    let (js, stats) = run_inference(&[], PromptKind::TaskDes, PromptVariant::JsonQuestion, None, &gw, &Decoding::new("m")).unwrap();
    assert!(js.is_empty());
    assert_eq!(stats, InferenceStats::default());
    assert_eq!(provider.calls(), 0);
}

#[test]
fn all_failed_inference_is_a_stage_error() {
    let dir = tempfile::tempdir().unwrap();
    let provider = ScriptedProvider::with_responder(|_| None);
    let gw = Gateway::new(Arc::new(provider), dir.path(), GatewayConfig::default()).unwrap();
    let ex = synthetic_corpus(&FixtureSpec {
        n_train: 0,
        n_val: 0,
        n_test: 3,
        ..FixtureSpec::default()
    });
    let err = run_inference(&ex, PromptKind::TaskDes, PromptVariant::JsonQuestion, None, &gw, &Decoding::new("m")).unwrap_err();
    assert!(matches!(err, ExperimentError::StageFailure { .. }));
}

#[test]
fn uncalibrated_report_is_the_raw_llm() {
    let dir = tempfile::tempdir().unwrap();
    let (_, gw) = mock_gateway(dir.path());
    let data = synthetic_corpus(&FixtureSpec::default());
    let config = ExperimentConfig::new(DatasetKind::Sem16).with_variant(Variant::WoCalibration);
    let prepared = prepare(&config, &data, &gw).unwrap();
    assert!(prepared.train_judgments.is_empty() && prepared.cads.is_empty());
    let seeds = run_seeds(&config, &prepared).unwrap();
    let report = aggregate(&config, &prepared, &seeds).unwrap();
    let raw = raw_predictions(&prepared.partition.test, &prepared.test_judgments);
    // every seed scores the same raw predictions; the seed mean is exact up to rounding
    assert!((report.f1_mean - macro_f1(&raw, DatasetKind::Sem16)).abs() < 1e-9);
    assert!(report.per_seed.iter().all(|r| *r == report.raw_llm));
    assert!((report.bias.bias_ssc - report.raw_llm.bias_ssc).abs() < 1e-9);
}

#[test]
fn persisted_predictions_reproduce_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let (_, gw) = mock_gateway(&dir.path().join("cache"));
    let data = synthetic_corpus(&FixtureSpec::default());
    let mut config = ExperimentConfig::new(DatasetKind::Sem16);
    config.seeds = vec![0, 1];
    let runs = dir.path().join("runs");
    let report = run_pipeline(&config, &data, &gw, Some(&runs)).unwrap();
    let run_dir = runs.join(&report.config_digest);
    let mut f1s = Vec::new();
    for seed in &config.seeds {
        let sd = run_dir.join(seed.to_string());
        let log = PredictionLog::from_jsonl(&std::fs::read_to_string(sd.join("predictions.jsonl")).unwrap()).unwrap();
        f1s.push(macro_f1(&log, DatasetKind::Sem16));
        assert!(sd.join("checkpoint/weights.bin").exists());
        assert!(sd.join("train_log.jsonl").exists());
    }
    assert_eq!(f1s, report.f1_per_seed);
    let on_disk: ExperimentReport =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(on_disk.f1_mean, report.f1_mean);
    assert!(run_dir.join("timing.json").exists());
}

#[test]
fn ablation_lattice_on_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (_, gw) = mock_gateway(dir.path());
    let data = synthetic_corpus(&FixtureSpec::default());
    let base = ExperimentConfig::new(DatasetKind::Sem16);
    let f1 = |v: Variant| run_pipeline(&base.with_variant(v), &data, &gw, None).unwrap();
    let full = f1(Variant::Full);
    let wo_cad = f1(Variant::WoCad);
    let wo_nc = f1(Variant::WoNonCausal);
    let wo_c = f1(Variant::WoCausal);
    let wo_cal = f1(Variant::WoCalibration);
    for (name, r) in [("wo_cad", &wo_cad), ("wo_non_causal", &wo_nc), ("wo_causal", &wo_c), ("wo_calibration", &wo_cal)] {
        println!("full - {name}: {:+.2} F1", full.f1_mean - r.f1_mean);
        assert!(full.f1_mean >= r.f1_mean, "{name}");
    }
    // single-kind removals against the no-CAD run are logged, not asserted
    println!("wo_non_causal - wo_cad: {:+.2}", wo_nc.f1_mean - wo_cad.f1_mean);
    println!("wo_causal - wo_cad: {:+.2}", wo_c.f1_mean - wo_cad.f1_mean);
    assert!(wo_cal.f1_mean < wo_cad.f1_mean);
}

#[test]
fn calibration_steadies_prompt_layouts() {
    let dir = tempfile::tempdir().unwrap();
    let (_, gw) = mock_gateway(dir.path());
    let data = synthetic_corpus(&FixtureSpec::default());
    let mut reports = Vec::new();
    for v in PromptVariant::ALL {
        let mut config = ExperimentConfig::new(DatasetKind::Sem16);
        config.prompt_variant = v;
        config.seeds = vec![0, 1];
        for variant in [Variant::Full, Variant::WoCalibration] {
            reports.push(run_pipeline(&config.with_variant(variant), &data, &gw, None).unwrap());
        }
    }
    let rows = prompt_robustness(&reports).unwrap();
    println!("{}", render_robustness(&rows));
    let var = |v: Variant| rows.iter().find(|r| r.system == v).unwrap().variance;
    assert!(var(Variant::Full) <= var(Variant::WoCalibration));
}

#[test]
fn calibrated_accuracy_beats_raw() {
    let dir = tempfile::tempdir().unwrap();
    let (_, gw) = mock_gateway(dir.path());
    let data = synthetic_corpus(&FixtureSpec::default());
    let mut config = ExperimentConfig::new(DatasetKind::Sem16);
    config.seeds = vec![3];
    let prepared = prepare(&config, &data, &gw).unwrap();
    let seeds = run_seeds(&config, &prepared).unwrap();
    let raw = raw_predictions(&prepared.partition.test, &prepared.test_judgments);
    assert!(accuracy(&seeds[0].predictions) > accuracy(&raw));
}

#[test]
fn welch_matches_reference_values() {
    let p = significance(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    assert!((p - 0.34659350708733416).abs() < 1e-9, "{p}");
    let p = significance(&[80.1, 81.3, 79.8, 82.0, 80.7], &[84.2, 85.0, 83.1, 86.3, 84.9]).unwrap();
    assert!((p - 0.0004463196107991216).abs() < 1e-9, "{p}");
    let a = [80.0, 81.0, 80.0, 81.0, 80.0];
    let b = [60.0, 61.0, 60.0, 61.0, 60.0];
    assert!(significance(&a, &b).unwrap() < 0.001);
    assert_eq!(significance(&a, &b).unwrap(), significance(&b, &a).unwrap());
    assert_eq!(significance(&a, &a).unwrap(), 1.0);
    assert_eq!(significance(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
    assert!(significance(&[1.0, 1.0], &[2.0, 2.0]).is_err());
    assert!(significance(&[1.0], &[2.0]).is_err());
}

/// Random corpus over a dataset's published targets, with split tags for VAST.
fn random_corpus(kind: DatasetKind, n: usize, seed: u64) -> Vec<StanceExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: Vec<String> = match kind {
        DatasetKind::Vast => (0..12).map(|i| format!("topic {i}")).collect(),
        _ => published_counts(kind).iter().map(|(t, _)| t.to_string()).collect(),
    };
    let labels = kind.label_set();
    (0..n)
        .map(|i| StanceExample {
            id: format!("{}-{i}", kind.as_str()),
            text: format!("text {i}"),
            target: targets[rng.gen_range(0..targets.len())].clone(),
            gold_stance: labels[rng.gen_range(0..labels.len())],
            sentiment: None,
            dataset: kind,
            split: Some([Split::Train, Split::Val, Split::Test][rng.gen_range(0..3)]),
        })
        .collect()
}

fn check_zero_shot(examples: &[StanceExample], held_out: &str, seed: u64) {
    let part = make_zero_shot_splits(examples, &SplitSpec::zero_shot(held_out, seed)).unwrap();
    assert!(part.train.iter().chain(&part.val).all(|e| e.target != held_out));
    assert!(part.test.iter().all(|e| e.target == held_out));
    let rest = part.train.len() + part.val.len();
    assert_eq!(part.train.len(), rest * 7 / 8);
    assert_eq!(rest + part.test.len(), examples.len());
    let ids: HashSet<&str> = part.train.iter().chain(&part.val).chain(&part.test).map(|e| e.id.as_str()).collect();
    assert_eq!(ids.len(), examples.len());
}

#[test]
fn synthetic_fixture_split_never_leaks() {
    let data = synthetic_corpus(&FixtureSpec::default());
    for t in FIXTURE_TARGETS {
        for seed in 0..5 {
            check_zero_shot(&data, t, seed);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_shot_split_never_leaks(kind in prop_oneof![Just(DatasetKind::Sem16), Just(DatasetKind::Pstance)], n in 20usize..400, seed in any::<u64>()) {
        let data = random_corpus(kind, n, seed);
        for t in targets(&data) {
            check_zero_shot(&data, &t, seed);
        }
    }

    #[test]
    fn vast_keeps_published_split_tags(n in 1usize..300, seed in any::<u64>()) {
        let data = random_corpus(DatasetKind::Vast, n, seed);
        let part = make_zero_shot_splits(&data, &SplitSpec::zero_shot("", seed)).unwrap();
        prop_assert!(part.train.iter().all(|e| e.split == Some(Split::Train)));
        prop_assert!(part.val.iter().all(|e| e.split == Some(Split::Val)));
        prop_assert!(part.test.iter().all(|e| e.split == Some(Split::Test)));
        prop_assert_eq!(part.train.len() + part.val.len() + part.test.len(), n);
    }
}
