//! The calibration network: a classifier over the sample plus the LLM's
//! stance judgment and rationale, trained jointly on original and
//! counterfactual records.
//!
//! The joint objective is the sum of three per-stratum mean cross-entropies
//! (original, non-causal, causal). An empty stratum contributes zero.

use std::fmt;
use std::fs;
use std::hash::Hasher;
use std::io::Write;
use std::path::Path;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bias_metrics::{macro_f1, PredictionEntry, PredictionLog};
use crate::corpus::{DatasetKind, StanceExample, StanceLabel};
use crate::counterfactual::{reverse, CadKind, CadStatus, CounterfactualExample};
use crate::prompting::LlmJudgment;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("counterfactual for {0} has not been validated")]
    UnvalidatedCad(String),
    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(usize),
    #[error("label {0} is not in the model's label order")]
    LabelOutsideOrder(StanceLabel),
    #[error("{0} records is fewer than one batch of {1} with drop_last set")]
    TooFewRecords(usize, usize),
    #[error("the {0} backend is not available in this build")]
    BackendUnavailable(Backend),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CalibrationError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Original,
    CadNonCausal,
    CadCausal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub input_text: String,
    pub label: StanceLabel,
    pub origin: Origin,
    pub parent_id: String,
}

/// The calibrator's input layout.
pub fn serialize_fields(text: &str, target: &str, stance: StanceLabel, rationale: &str) -> String {
    format!("Text: {text}\nTarget: {target}\nLLM stance: {stance}\nRationale: {rationale}")
}

pub fn serialize_record(example: &StanceExample, judgment: &LlmJudgment) -> String {
    serialize_fields(
        &example.text,
        &example.target,
        judgment.parsed.stance,
        &judgment.parsed.rationale,
    )
}

/// Original records keep their gold label; non-causal records keep the
/// parent's label and causal records carry the reversed one.
pub fn assemble_training_set(
    originals: &[(StanceExample, LlmJudgment)],
    cads: &[(CounterfactualExample, LlmJudgment)],
) -> Result<Vec<CalibrationRecord>> {
    let mut out = Vec::with_capacity(originals.len() + cads.len());
    for (ex, j) in originals {
        out.push(CalibrationRecord {
            input_text: serialize_record(ex, j),
            label: ex.gold_stance,
            origin: Origin::Original,
            parent_id: ex.id.clone(),
        });
    }
    for (c, j) in cads {
        if c.status != CadStatus::Valid {
            return Err(CalibrationError::UnvalidatedCad(c.parent_id.clone()));
        }
        out.push(CalibrationRecord {
            input_text: serialize_fields(&c.text, &c.target, j.parsed.stance, &j.parsed.rationale),
            label: c.label,
            origin: match c.kind {
                CadKind::NonCausal => Origin::CadNonCausal,
                CadKind::Causal => Origin::CadCausal,
            },
            parent_id: c.parent_id.clone(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Pretrained bidirectional encoder with a linear head.
    Encoder,
    /// Hashed bag of words with a softmax layer.
    LinearBag,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Encoder => "encoder",
            Backend::LinearBag => "linear_bag",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalLossMode {
    /// Cross-entropy against the reversed label.
    FlippedLabelCe,
    /// `+mean log p(original label)` on the causal samples, sign as printed.
    LiteralEq10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub backend: Backend,
    pub dataset: DatasetKind,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub causal_loss_mode: CausalLossMode,
    pub drop_last: bool,
    /// Feature space size of the linear backend is `2^hash_bits`.
    pub hash_bits: u32,
}

impl Default for TrainConfig {
    /// AdamW, batch 32, lr 1e-5, weight decay 1e-3, five seeds.
    fn default() -> Self {
        TrainConfig {
            backend: Backend::Encoder,
            dataset: DatasetKind::Sem16,
            batch_size: 32,
            learning_rate: 1e-5,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 10,
            seeds: vec![0, 1, 2, 3, 4],
            causal_loss_mode: CausalLossMode::FlippedLabelCe,
            drop_last: false,
            hash_bits: 14,
        }
    }
}

impl TrainConfig {
    /// Settings for the linear backend. A bag-of-words softmax trained from
    /// zero needs a far larger step than a pretrained encoder.
    pub fn linear_bag(dataset: DatasetKind) -> Self {
        TrainConfig {
            backend: Backend::LinearBag,
            dataset,
            learning_rate: 0.1,
            epochs: 20,
            ..TrainConfig::default()
        }
    }

    pub fn label_order(&self) -> Vec<StanceLabel> {
        self.dataset.label_set().to_vec()
    }
}

/// Sparse feature vector: sorted, unique indices.
pub type Features = Vec<(u32, f64)>;

fn field_namespace(line: &str) -> (&'static str, &str) {
    for (prefix, ns) in [
        ("Text:", "x"),
        ("Target:", "t"),
        ("LLM stance:", "s"),
        ("Rationale:", "r"),
    ] {
        if let Some(rest) = line.strip_prefix(prefix) {
            return (ns, rest);
        }
    }
    ("r", line)
}

/// Unigrams and bigrams per field, hashed into `2^bits` buckets, binary
/// presence, L2-normalised.
pub fn featurize(input: &str, bits: u32) -> Features {
    let mask = (1u64 << bits) - 1;
    let hash = |ns: &str, a: &str, b: Option<&str>| -> u32 {
        let mut h = FnvHasher::default();
        h.write(ns.as_bytes());
        h.write_u8(0);
        h.write(a.as_bytes());
        if let Some(b) = b {
            h.write_u8(1);
            h.write(b.as_bytes());
        }
        (h.finish() & mask) as u32
    };
    let mut idx: Vec<u32> = Vec::new();
    let mut field = "x";
    for line in input.lines() {
        let (ns, rest) = field_namespace(line);
        // continuation lines belong to the previous field
        let ns = if line.contains(':') && rest.len() < line.len() {
            field = ns;
            ns
        } else {
            field
        };
        let tokens: Vec<String> = rest
            .split(|c: char| !c.is_alphanumeric() && c != '\'')
            .filter(|t| !t.is_empty())
            .map(|t| t.to_lowercase())
            .collect();
        for (i, t) in tokens.iter().enumerate() {
            idx.push(hash(ns, t, None));
            if let Some(next) = tokens.get(i + 1) {
                idx.push(hash(ns, t, Some(next)));
            }
        }
    }
    idx.sort_unstable();
    idx.dedup();
    if idx.is_empty() {
        return Vec::new();
    }
    let v = 1.0 / (idx.len() as f64).sqrt();
    idx.into_iter().map(|i| (i, v)).collect()
}

/// Softmax over hashed features: `logits = W·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBag {
    pub hash_bits: u32,
    pub num_classes: usize,
    /// Row-major `num_classes × 2^hash_bits`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearBag {
    pub fn zeros(num_classes: usize, hash_bits: u32) -> Self {
        let dim = 1usize << hash_bits;
        LinearBag {
            hash_bits,
            num_classes,
            weights: vec![0.0; num_classes * dim],
            bias: vec![0.0; num_classes],
        }
    }

    pub fn dim(&self) -> usize {
        1usize << self.hash_bits
    }

    pub fn logits(&self, features: &Features) -> Vec<f64> {
        let dim = self.dim();
        (0..self.num_classes)
            .map(|k| {
                let row = &self.weights[k * dim..(k + 1) * dim];
                self.bias[k] + features.iter().map(|&(i, v)| row[i as usize] * v).sum::<f64>()
            })
            .collect()
    }

    pub fn probabilities(&self, features: &Features) -> Vec<f64> {
        softmax(&self.logits(features))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Numerically stable `log softmax(logits)[k]`.
fn log_prob(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits[k] - lse
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratorModel {
    pub backend: Backend,
    pub label_order: Vec<StanceLabel>,
    pub linear: LinearBag,
}

impl CalibratorModel {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        if config.backend != Backend::LinearBag {
            return Err(CalibrationError::BackendUnavailable(config.backend));
        }
        let label_order = config.label_order();
        Ok(CalibratorModel {
            backend: config.backend,
            linear: LinearBag::zeros(label_order.len(), config.hash_bits),
            label_order,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.label_order.len()
    }

    pub fn class_index(&self, label: StanceLabel) -> Result<usize> {
        self.label_order
            .iter()
            .position(|&l| l == label)
            .ok_or(CalibrationError::LabelOutsideOrder(label))
    }

    pub fn featurize(&self, input: &str) -> Features {
        featurize(input, self.linear.hash_bits)
    }
}

/// Distribution over `label_order` and its argmax; ties go to the earlier label.
pub fn predict(model: &CalibratorModel, input_text: &str) -> (Vec<f64>, StanceLabel) {
    let probs = model.linear.probabilities(&model.featurize(input_text));
    (probs.clone(), argmax_label(&probs, &model.label_order))
}

pub fn argmax_label(probs: &[f64], label_order: &[StanceLabel]) -> StanceLabel {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    label_order[best]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub ce: f64,
    pub non_causal: f64,
    pub causal: f64,
}

/// A record with its features and class index precomputed.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub features: Features,
    pub class: usize,
    pub origin: Origin,
    /// Class of the pre-reversal label, for causal records.
    pub original_class: Option<usize>,
}

pub fn encode(model: &CalibratorModel, record: &CalibrationRecord) -> Result<Encoded> {
    let class = model.class_index(record.label)?;
    let original_class = match record.origin {
        Origin::CadCausal => match reverse(record.label) {
            Ok(l) => Some(model.class_index(l)?),
            Err(_) => None,
        },
        _ => None,
    };
    Ok(Encoded {
        features: model.featurize(&record.input_text),
        class,
        origin: record.origin,
        original_class,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn stratum_counts(batch: &[&Encoded]) -> [usize; 3] {
    let mut n = [0usize; 3];
    for e in batch {
        n[stratum(e.origin)] += 1;
    }
    n
}

fn stratum(origin: Origin) -> usize {
    match origin {
        Origin::Original => 0,
        Origin::CadNonCausal => 1,
        Origin::CadCausal => 2,
    }
}

/// Joint loss and (optionally) its gradient over one batch.
pub fn loss_and_gradient(
    model: &LinearBag,
    batch: &[&Encoded],
    mode: CausalLossMode,
    with_gradient: bool,
) -> (LossParts, Option<Gradient>) {
    let counts = stratum_counts(batch);
    let mut sums = [0.0f64; 3];
    let dim = model.dim();
    let mut grad = with_gradient.then(|| Gradient {
        weights: vec![0.0; model.weights.len()],
        bias: vec![0.0; model.bias.len()],
    });
    for e in batch {
        let s = stratum(e.origin);
        let scale = 1.0 / counts[s] as f64;
        let logits = model.logits(&e.features);
        // d(term)/d(logits) = sign * (p - onehot(class))
        let (term, class, sign) = match (e.origin, mode, e.original_class) {
            (Origin::CadCausal, CausalLossMode::LiteralEq10, Some(orig)) => (log_prob(&logits, orig), orig, -1.0),
            _ => (-log_prob(&logits, e.class), e.class, 1.0),
        };
        sums[s] += term * scale;
        if let Some(g) = grad.as_mut() {
            let probs = softmax(&logits);
            for (k, p) in probs.iter().enumerate() {
                let dz = sign * scale * (p - if k == class { 1.0 } else { 0.0 });
                g.bias[k] += dz;
                let row = &mut g.weights[k * dim..(k + 1) * dim];
                for &(i, v) in &e.features {
                    row[i as usize] += dz * v;
                }
            }
        }
    }
    let parts = LossParts {
        total: sums[0] + sums[1] + sums[2],
        ce: sums[0],
        non_causal: sums[1],
        causal: sums[2],
    };
    (parts, grad)
}

/// Loss parts of a batch of records under a model.
pub fn joint_loss(records: &[CalibrationRecord], model: &CalibratorModel, mode: CausalLossMode) -> Result<LossParts> {
    let encoded = records.iter().map(|r| encode(model, r)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Encoded> = encoded.iter().collect();
    Ok(loss_and_gradient(&model.linear, &refs, mode, false).0)
}

/// AdamW with decoupled weight decay; decay is not applied to biases.
#[derive(Debug, Clone)]
pub struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
}

impl AdamW {
    pub fn new(config: &TrainConfig, model: &LinearBag) -> Self {
        AdamW {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            weight_decay: config.weight_decay,
            step: 0,
            m_w: vec![0.0; model.weights.len()],
            v_w: vec![0.0; model.weights.len()],
            m_b: vec![0.0; model.bias.len()],
            v_b: vec![0.0; model.bias.len()],
        }
    }

    pub fn step(&mut self, model: &mut LinearBag, grad: &Gradient) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (lr, b1, b2, eps, wd) = (self.lr, self.beta1, self.beta2, self.eps, self.weight_decay);
        let update = |w: &mut f64, g: f64, m: &mut f64, v: &mut f64, decay: bool| {
            if decay {
                *w -= lr * wd * *w;
            }
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for i in 0..model.weights.len() {
            update(&mut model.weights[i], grad.weights[i], &mut self.m_w[i], &mut self.v_w[i], true);
        }
        for i in 0..model.bias.len() {
            update(&mut model.bias[i], grad.bias[i], &mut self.m_b[i], &mut self.v_b[i], false);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss_total: f64,
    pub loss_ce: f64,
    pub loss_ncau: f64,
    pub loss_cau: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CalibratorModel,
    pub steps: Vec<StepLog>,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub epoch_val_f1: Vec<f64>,
    pub best_epoch: usize,
}

fn validation_f1(model: &CalibratorModel, val: &[Encoded], dataset: DatasetKind) -> f64 {
    let entries = val
        .iter()
        .enumerate()
        .map(|(i, e)| PredictionEntry {
            id: i.to_string(),
            gold: model.label_order[e.class],
            pred: argmax_label(&model.linear.probabilities(&e.features), &model.label_order),
            sentiment: None,
            target: String::new(),
            dataset,
        })
        .collect();
    macro_f1(&PredictionLog::new(entries), dataset)
}

/// Trains from zero with one seed and keeps the epoch with the best
/// validation macro F1 (the last epoch when `val` is empty).
pub fn train(
    records: &[CalibrationRecord],
    val: &[CalibrationRecord],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut model = CalibratorModel::new(config)?;
    if config.drop_last && records.len() < config.batch_size {
        return Err(CalibrationError::TooFewRecords(records.len(), config.batch_size));
    }
    let encoded = records.iter().map(|r| encode(&model, r)).collect::<Result<Vec<_>>>()?;
    let val_encoded = val.iter().map(|r| encode(&model, r)).collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = AdamW::new(config, &model.linear);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut steps = Vec::new();
    let mut epoch_loss = Vec::new();
    let mut epoch_val_f1 = Vec::new();
    let mut best: Option<(f64, usize, LinearBag)> = None;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size.max(1)) {
            if config.drop_last && chunk.len() < config.batch_size {
                continue;
            }
            let batch: Vec<&Encoded> = chunk.iter().map(|&i| &encoded[i]).collect();
            let (parts, grad) = loss_and_gradient(&model.linear, &batch, config.causal_loss_mode, true);
            let step = steps.len();
            if !parts.total.is_finite() {
                return Err(CalibrationError::NonFiniteLoss(step));
            }
            opt.step(&mut model.linear, &grad.expect("gradient requested"));
            steps.push(StepLog {
                step,
                loss_total: parts.total,
                loss_ce: parts.ce,
                loss_ncau: parts.non_causal,
                loss_cau: parts.causal,
            });
            loss_sum += parts.total;
            batches += 1;
        }
        epoch_loss.push(if batches > 0 { loss_sum / batches as f64 } else { 0.0 });
        let f1 = if val_encoded.is_empty() {
            0.0
        } else {
            validation_f1(&model, &val_encoded, config.dataset)
        };
        epoch_val_f1.push(f1);
        let improves = match &best {
            None => true,
            Some((b, _, _)) => f1 > *b || val_encoded.is_empty(),
        };
        if improves {
            best = Some((f1, epoch, model.linear.clone()));
        }
    }
    let best_epoch = match best {
        Some((_, epoch, linear)) => {
            model.linear = linear;
            epoch
        }
        None => 0,
    };
    Ok(TrainOutcome {
        model,
        steps,
        epoch_loss,
        epoch_val_f1,
        best_epoch,
    })
}

pub fn write_train_log(path: &Path, steps: &[StepLog]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for s in steps {
        serde_json::to_writer(&mut f, s).map_err(|e| CalibrationError::Checkpoint(e.to_string()))?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointConfig {
    train: TrainConfig,
    label_order: Vec<StanceLabel>,
    backend: Backend,
    hash_bits: u32,
}

/// Writes `config.json` and `weights.bin` (little-endian f64: weights, then biases).
pub fn save_checkpoint(dir: &Path, model: &CalibratorModel, config: &TrainConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = CheckpointConfig {
        train: config.clone(),
        label_order: model.label_order.clone(),
        backend: model.backend,
        hash_bits: model.linear.hash_bits,
    };
    let json = serde_json::to_vec_pretty(&meta).map_err(|e| CalibrationError::Checkpoint(e.to_string()))?;
    fs::write(dir.join("config.json"), json)?;
    let mut bytes = Vec::with_capacity(8 * (model.linear.weights.len() + model.linear.bias.len()));
    for w in model.linear.weights.iter().chain(&model.linear.bias) {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    fs::write(dir.join("weights.bin"), bytes)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(CalibratorModel, TrainConfig)> {
    let meta: CheckpointConfig = serde_json::from_slice(&fs::read(dir.join("config.json"))?)
        .map_err(|e| CalibrationError::Checkpoint(e.to_string()))?;
    let bytes = fs::read(dir.join("weights.bin"))?;
    let k = meta.label_order.len();
    let mut linear = LinearBag::zeros(k, meta.hash_bits);
    let expected = 8 * (linear.weights.len() + k);
    if bytes.len() != expected {
        return Err(CalibrationError::Checkpoint(format!(
            "weights.bin has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for w in linear.weights.iter_mut().chain(linear.bias.iter_mut()) {
        *w = values.next().expect("length checked");
    }
    Ok((
        CalibratorModel {
            backend: meta.backend,
            label_order: meta.label_order,
            linear,
        },
        meta.train,
    ))
}
