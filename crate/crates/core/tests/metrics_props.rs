mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stance_calib::bias_metrics::*;
use stance_calib::corpus::{DatasetKind, Sentiment, StanceLabel};

fn kind_strategy() -> impl Strategy<Value = DatasetKind> {
    prop_oneof![Just(DatasetKind::Sem16), Just(DatasetKind::Pstance), Just(DatasetKind::Vast)]
}

fn log_strategy() -> impl Strategy<Value = PredictionLog> {
    (any::<u64>(), 1usize..200, kind_strategy())
        .prop_map(|(seed, n, kind)| common::random_log(&mut ChaCha8Rng::seed_from_u64(seed), n, kind))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_confusion_oracle(log in log_strategy()) {
        let kind = log.entries[0].dataset;
        let refs: Vec<_> = log.entries.iter().collect();
        prop_assert!((rstd(&log, kind.label_set()).unwrap() - common::oracle_rstd(&refs, kind.label_set())).abs() <= 1e-9);
        prop_assert!((macro_f1(&log, kind) - common::oracle_macro_f1(&log, kind)).abs() <= 1e-9);
        prop_assert!((bias_ssc(&log).unwrap() - common::oracle_ssc(&log, kind)).abs() <= 1e-9);
        prop_assert!((bias_tpb(&log).unwrap() - common::oracle_tpb(&log, kind)).abs() <= 1e-9);
    }

    #[test]
    fn rstd_bounded(log in log_strategy()) {
        let kind = log.entries[0].dataset;
        let v = rstd(&log, kind.label_set()).unwrap();
        prop_assert!((0.0..=50.0).contains(&v));
        let f1 = macro_f1(&log, kind);
        prop_assert!((0.0..=100.0).contains(&f1));
    }

    #[test]
    fn order_does_not_matter(log in log_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = log.clone();
        shuffled.entries.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let kind = log.entries[0].dataset;
        prop_assert_eq!(bias_report(&log, kind).unwrap(), bias_report(&shuffled, kind).unwrap());
    }

    #[test]
    fn sentiment_cell_duplication_keeps_ssc(log in log_strategy(), k in prop_oneof![Just(2usize), Just(5), Just(10)], pick in any::<prop::sample::Index>()) {
        let chosen = pick.get(&log.entries);
        let (s, l) = (chosen.sentiment, chosen.gold);
        let mut dup = log.clone();
        for e in log.entries.iter().filter(|e| e.sentiment == s && e.gold == l) {
            for _ in 1..k {
                dup.entries.push(e.clone());
            }
        }
        prop_assert_eq!(bias_ssc(&log).unwrap(), bias_ssc(&dup).unwrap());
    }

    #[test]
    fn perfect_predictions_have_no_bias(log in log_strategy()) {
        let mut perfect = log.clone();
        for e in &mut perfect.entries {
            e.pred = e.gold;
        }
        let kind = log.entries[0].dataset;
        let r = bias_report(&perfect, kind).unwrap();
        prop_assert_eq!(r.bias_ssc, 0.0);
        prop_assert_eq!(r.bias_tpb, 0.0);
    }

    #[test]
    fn pearson_symmetry_and_affine_invariance(xs in prop::collection::vec(-100.0f64..100.0, 3..40), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys: Vec<f64> = xs.iter().map(|x| x * 0.3 + rng.gen_range(-50.0..50.0)).collect();
        if let (Ok((r1, p1)), Ok((r2, p2))) = (pearson(&xs, &ys), pearson(&ys, &xs)) {
            prop_assert!((r1 - r2).abs() < 1e-12);
            prop_assert!((p1 - p2).abs() < 1e-9);
            prop_assert!(r1.abs() <= 1.0);
            prop_assert!((0.0..=1.0).contains(&p1));
            let scaled: Vec<f64> = xs.iter().map(|x| 3.0 * x + 7.0).collect();
            let (r3, _) = pearson(&scaled, &ys).unwrap();
            prop_assert!((r1 - r3).abs() < 1e-9);
        }
    }
}

#[test]
fn single_target_tpb_is_rstd() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut log = common::random_log(&mut rng, 150, DatasetKind::Sem16);
    for e in &mut log.entries {
        e.target = "only".into();
    }
    assert_eq!(bias_tpb(&log).unwrap(), rstd(&log, &StanceLabel::ALL).unwrap());
}

#[test]
fn zero_support_labels_are_excluded_and_counted() {
    let entries = [(StanceLabel::Favor, StanceLabel::Favor), (StanceLabel::Against, StanceLabel::Favor)]
        .iter()
        .enumerate()
        .map(|(i, (g, p))| PredictionEntry {
            id: i.to_string(),
            gold: *g,
            pred: *p,
            sentiment: Some(Sentiment::Positive),
            target: "t".into(),
            dataset: DatasetKind::Sem16,
        })
        .collect();
    let log = PredictionLog::new(entries);
    let r = bias_report(&log, DatasetKind::Sem16).unwrap();
    // recalls {1, 0}; neutral has no gold rows
    assert_eq!(r.per_subset_rstd["sentiment:positive"], 50.0);
    assert_eq!(r.n_excluded_labels["sentiment:positive"], 1);
}

#[test]
fn report_round_trips_through_jsonl() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let log = common::random_log(&mut rng, 80, DatasetKind::Vast);
    let back = PredictionLog::from_jsonl(&log.to_jsonl()).unwrap();
    assert_eq!(back, log);
}
