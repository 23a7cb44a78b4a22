#![allow(dead_code)]

use rand::Rng;
use stance_calib::bias_metrics::{PredictionEntry, PredictionLog};
use stance_calib::corpus::{DatasetKind, Sentiment, StanceLabel};

/// Confusion-matrix oracle, written without the library's metric code.
pub struct Confusion {
    pub labels: Vec<StanceLabel>,
    /// `cm[gold][pred]` over `labels` indices.
    pub cm: Vec<Vec<f64>>,
}

impl Confusion {
    pub fn of(entries: &[&PredictionEntry], labels: &[StanceLabel]) -> Confusion {
        let k = labels.len();
        let mut cm = vec![vec![0.0; k]; k];
        for e in entries {
            let g = labels.iter().position(|l| *l == e.gold).unwrap();
            let p = labels.iter().position(|l| *l == e.pred).unwrap();
            cm[g][p] += 1.0;
        }
        Confusion {
            labels: labels.to_vec(),
            cm,
        }
    }

    pub fn recalls(&self) -> Vec<f64> {
        (0..self.labels.len())
            .filter_map(|i| {
                let row: f64 = self.cm[i].iter().sum();
                (row > 0.0).then(|| self.cm[i][i] / row)
            })
            .collect()
    }

    pub fn f1(&self, i: usize) -> f64 {
        let tp = self.cm[i][i];
        let col: f64 = self.cm.iter().map(|r| r[i]).sum();
        let row: f64 = self.cm[i].iter().sum();
        if col == 0.0 || row == 0.0 {
            return 0.0;
        }
        let (p, r) = (tp / col, tp / row);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

pub fn pop_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

pub fn oracle_rstd(entries: &[&PredictionEntry], labels: &[StanceLabel]) -> f64 {
    100.0 * pop_std(&Confusion::of(entries, labels).recalls())
}

pub fn oracle_macro_f1(log: &PredictionLog, kind: DatasetKind) -> f64 {
    let labels = kind.label_set();
    let refs: Vec<&PredictionEntry> = log.entries.iter().collect();
    let c = Confusion::of(&refs, labels);
    let scored: Vec<usize> = match kind {
        DatasetKind::Vast => (0..labels.len()).collect(),
        _ => vec![0, 1],
    };
    100.0 * scored.iter().map(|&i| c.f1(i)).sum::<f64>() / scored.len() as f64
}

fn oracle_mean_over<K: PartialEq + Clone>(log: &PredictionLog, labels: &[StanceLabel], key: impl Fn(&PredictionEntry) -> K) -> f64 {
    let mut keys: Vec<K> = Vec::new();
    for e in &log.entries {
        let k = key(e);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let total: f64 = keys
        .iter()
        .map(|k| {
            let sub: Vec<&PredictionEntry> = log.entries.iter().filter(|e| key(e) == *k).collect();
            oracle_rstd(&sub, labels)
        })
        .sum();
    total / keys.len() as f64
}

pub fn oracle_ssc(log: &PredictionLog, kind: DatasetKind) -> f64 {
    oracle_mean_over(log, kind.label_set(), |e| e.sentiment)
}

pub fn oracle_tpb(log: &PredictionLog, kind: DatasetKind) -> f64 {
    oracle_mean_over(log, kind.label_set(), |e| e.target.clone())
}

/// Random log of `n` entries over the dataset's labels, 1-4 targets.
pub fn random_log(rng: &mut impl Rng, n: usize, kind: DatasetKind) -> PredictionLog {
    let labels = kind.label_set();
    let n_targets = rng.gen_range(1..=4);
    let entries = (0..n)
        .map(|i| PredictionEntry {
            id: i.to_string(),
            gold: labels[rng.gen_range(0..labels.len())],
            pred: labels[rng.gen_range(0..labels.len())],
            sentiment: Some(Sentiment::ALL[rng.gen_range(0..3)]),
            target: format!("t{}", rng.gen_range(0..n_targets)),
            dataset: kind,
        })
        .collect();
    PredictionLog::new(entries)
}

pub mod prompt_fixtures {
    use stance_calib::corpus::{DatasetKind, StanceExample, StanceLabel};
    use stance_calib::prompting::{CotDemo, CotDemoSet};

    pub fn sample() -> StanceExample {
        StanceExample {
            id: "golden-1".into(),
            text: "Renewables are finally cheaper than coal, about time.".into(),
            target: "Climate Change is a Real Concern".into(),
            gold_stance: StanceLabel::Favor,
            sentiment: None,
            dataset: DatasetKind::Sem16,
            split: None,
        }
    }

    pub fn demos() -> CotDemoSet {
        let rows = [
            ("Stop pretending the planet is fine.", "Climate Change is a Real Concern", StanceLabel::Favor, "The author urges action on climate."),
            ("Feminism has gone too far.", "Feminist Movement", StanceLabel::Against, "The author criticises the movement."),
            ("Debate tonight at 9.", "Hillary Clinton", StanceLabel::Neutral, "The post only states a schedule."),
            ("Build the wall!", "Donald Trump", StanceLabel::Favor, "The slogan backs Trump's policy."),
        ];
        CotDemoSet {
            demos: rows
                .iter()
                .map(|(t, g, s, r)| CotDemo {
                    text: t.to_string(),
                    target: g.to_string(),
                    stance: *s,
                    rationale: r.to_string(),
                })
                .collect(),
            source_seed: 0,
            dataset: DatasetKind::Sem16,
        }
    }

    /// Deterministic adversarial corpus for the stance parser.
    pub fn fuzz_corpus(n: usize) -> Vec<String> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(500);
        let pieces = [
            "{", "}", "\"", "```json", "```", "stance", "\"stance\":", "favor", "against", "neutral", "none", "B.favor",
            "A.", ":", ",", "\n", "null", "[1,2]", "{\"stance\": 3}", "{\"stance\": \"maybe\"}", "é", "😀", "\\", "\u{0}",
            "answer", "{\"answer\": \"x\"", "pro", "con", "  ", "FAVOR", "(c) neutral", "{\"stance\":\"favor\"}",
        ];
        let mut out = vec![String::new(), " ".into(), "{".into(), "}{".into(), "\"".into()];
        while out.len() < n {
            let len = rng.gen_range(1..30);
            let mut s = String::new();
            for _ in 0..len {
                if rng.gen_bool(0.1) {
                    s.push(char::from_u32(rng.gen_range(0..0x2FFF)).unwrap_or('?'));
                } else {
                    s.push_str(pieces[rng.gen_range(0..pieces.len())]);
                }
            }
            out.push(s);
        }
        out
    }
}

#[allow(unused_imports)]
pub use prompt_fixtures::*;

pub mod calib {
    use rand::Rng;
    use stance_calib::calibration::*;
    use stance_calib::corpus::{DatasetKind, StanceLabel};

    const WORDS: [&str; 16] = [
        "tax", "vote", "shame", "great", "wall", "rights", "fair", "never", "again", "people", "plan", "bad", "hope",
        "women", "jobs", "lies",
    ];

    pub fn small_model(rng: &mut impl Rng, bits: u32) -> CalibratorModel {
        let config = TrainConfig {
            hash_bits: bits,
            ..TrainConfig::linear_bag(DatasetKind::Sem16)
        };
        let mut m = CalibratorModel::new(&config).unwrap();
        for w in m.linear.weights.iter_mut().chain(m.linear.bias.iter_mut()) {
            *w = rng.gen_range(-1.5..1.5);
        }
        m
    }

    pub fn random_record(rng: &mut impl Rng) -> CalibrationRecord {
        let words: Vec<&str> = (0..rng.gen_range(1..12)).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
        let label = StanceLabel::ALL[rng.gen_range(0..3)];
        let origin = [Origin::Original, Origin::CadNonCausal, Origin::CadCausal][rng.gen_range(0..3)];
        CalibrationRecord {
            input_text: serialize_fields(&words.join(" "), "t", StanceLabel::ALL[rng.gen_range(0..3)], WORDS[rng.gen_range(0..16)]),
            label,
            origin,
            parent_id: "p".into(),
        }
    }

    pub fn random_batch(rng: &mut impl Rng, n: usize) -> Vec<CalibrationRecord> {
        (0..n).map(|_| random_record(rng)).collect()
    }

    /// Dense log-softmax written out by hand.
    fn log_probs(model: &CalibratorModel, text: &str) -> Vec<f64> {
        let dim = 1usize << model.linear.hash_bits;
        let mut x = vec![0.0; dim];
        for (i, v) in featurize(text, model.linear.hash_bits) {
            x[i as usize] += v;
        }
        let k = model.label_order.len();
        let z: Vec<f64> = (0..k)
            .map(|c| model.linear.bias[c] + (0..dim).map(|j| model.linear.weights[c * dim + j] * x[j]).sum::<f64>())
            .collect();
        let m = z.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        z.iter().map(|v| v - lse).collect()
    }

    fn flip(l: StanceLabel) -> Option<StanceLabel> {
        match l {
            StanceLabel::Favor => Some(StanceLabel::Against),
            StanceLabel::Against => Some(StanceLabel::Favor),
            StanceLabel::Neutral => None,
        }
    }

    /// (original, non-causal, causal) stratum means computed without the library loss.
    pub fn oracle_parts(model: &CalibratorModel, batch: &[CalibrationRecord], literal: bool) -> [f64; 3] {
        let idx = |l: StanceLabel| model.label_order.iter().position(|x| *x == l).unwrap();
        let mut sums = [0.0; 3];
        let mut counts = [0usize; 3];
        for r in batch {
            let s = match r.origin {
                Origin::Original => 0,
                Origin::CadNonCausal => 1,
                Origin::CadCausal => 2,
            };
            let lp = log_probs(model, &r.input_text);
            let term = match (s, literal, flip(r.label)) {
                (2, true, Some(orig)) => lp[idx(orig)],
                _ => -lp[idx(r.label)],
            };
            sums[s] += term;
            counts[s] += 1;
        }
        let mut out = [0.0; 3];
        for s in 0..3 {
            if counts[s] > 0 {
                out[s] = sums[s] / counts[s] as f64;
            }
        }
        out
    }

    /// Worst relative error between analytic and central-difference
    /// gradients over `probes` coordinates touched by the batch.
    pub fn gradient_check(rng: &mut impl Rng, model: &CalibratorModel, batch: &[CalibrationRecord], mode: CausalLossMode, probes: usize) -> f64 {
        let enc: Vec<Encoded> = batch.iter().map(|r| encode(model, r).unwrap()).collect();
        let refs: Vec<&Encoded> = enc.iter().collect();
        let (_, g) = loss_and_gradient(&model.linear, &refs, mode, true);
        let g = g.unwrap();
        let dim = model.linear.dim();
        let k = model.linear.num_classes;
        let mut touched: Vec<usize> = enc.iter().flat_map(|e| e.features.iter().map(|&(i, _)| i as usize)).collect();
        touched.sort_unstable();
        touched.dedup();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for _ in 0..probes {
            let mut plus = model.linear.clone();
            let mut minus = model.linear.clone();
            let analytic = if rng.gen_bool(0.2) {
                let c = rng.gen_range(0..k);
                plus.bias[c] += h;
                minus.bias[c] -= h;
                g.bias[c]
            } else {
                let j = c_index(rng.gen_range(0..k), touched[rng.gen_range(0..touched.len())], dim);
                plus.weights[j] += h;
                minus.weights[j] -= h;
                g.weights[j]
            };
            let lp = loss_and_gradient(&plus, &refs, mode, false).0.total;
            let lm = loss_and_gradient(&minus, &refs, mode, false).0.total;
            let numeric = (lp - lm) / (2.0 * h);
            let denom = analytic.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
        worst
    }

    fn c_index(class: usize, feature: usize, dim: usize) -> usize {
        class * dim + feature
    }
}
