//! Full runs: sentiment annotation, LLM inference, counterfactual
//! augmentation, calibrator training per seed, and evaluation. Also the
//! ablation variants, significance testing, the bias/F1 correlation study
//! and the prompt-robustness study.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::bias_metrics::{
    bias_report, macro_f1, mean_report, normalized_recall_profile, pearson, BiasReport, MetricsError,
    PredictionEntry, PredictionLog,
};
use crate::calibration::{
    assemble_training_set, predict, save_checkpoint, serialize_record, train, write_train_log, CalibrationRecord,
    TrainConfig,
};
use crate::corpus::{make_splits, Partition, Protocol, SplitSpec, StanceExample, StanceLabel};
use crate::counterfactual::{augment, AugmentConfig, AugmentStats, CounterfactualExample};
use crate::corpus::DatasetKind;
use crate::llm_gateway::{cache_key, Decoding, Gateway, DEFAULT_CAD_MODEL, DEFAULT_INFERENCE_MODEL};
use crate::prompting::{
    annotate_sentiment, build_cot_demos, parse_stance_response, render_prompt_variant, CotDemoSet, LlmJudgment,
    ParsePath, ParsedStance, PromptKind, PromptVariant,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Split,
    Annotate,
    Demos,
    Inference,
    Augment,
    Train,
    Evaluate,
    Persist,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("stage {stage} failed: {cause}")]
    StageFailure { stage: Stage, cause: String },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("prompt robustness needs prompt variants 1, 2 and 3 for {0}")]
    IncompleteRuns(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn stage<E: fmt::Display>(stage: Stage) -> impl FnOnce(E) -> ExperimentError {
    move |e| ExperimentError::StageFailure {
        stage,
        cause: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    WoCad,
    WoNonCausal,
    WoCausal,
    WoCalibration,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::WoCad,
        Variant::WoNonCausal,
        Variant::WoCausal,
        Variant::WoCalibration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoCad => "wo_cad",
            Variant::WoNonCausal => "wo_non_causal",
            Variant::WoCausal => "wo_causal",
            Variant::WoCalibration => "wo_calibration",
        }
    }

    /// Row label in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Full => "FACTUAL",
            Variant::WoCad => "w/o CAD",
            Variant::WoNonCausal => "w/o non-causal CAD",
            Variant::WoCausal => "w/o causal CAD",
            Variant::WoCalibration => "w/o Calibration",
        }
    }

    fn augment_config(self, retries: u32) -> Option<AugmentConfig> {
        let (non_causal, causal) = match self {
            Variant::Full => (true, true),
            Variant::WoNonCausal => (false, true),
            Variant::WoCausal => (true, false),
            Variant::WoCad | Variant::WoCalibration => return None,
        };
        Some(AugmentConfig {
            non_causal,
            causal,
            retries,
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '/', ' '], "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm || v.as_str().replace("wo_", "w_o_") == norm)
            .ok_or_else(|| format!("unknown variant {s:?}; expected one of full, wo_cad, wo_non_causal, wo_causal, wo_calibration"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub protocol: Protocol,
    pub held_out_target: Option<String>,
    pub prompt_variant: PromptVariant,
    pub llm_model_id: String,
    pub cad_model_id: String,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    /// Shuffle seed for the zero-shot train/val split.
    pub split_seed: u64,
    /// Seed for sampling the CoT demonstrations.
    pub demo_seed: u64,
    /// Regeneration attempts for rejected counterfactuals.
    pub cad_retries: u32,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetKind) -> Self {
        ExperimentConfig {
            dataset,
            protocol: Protocol::InTarget,
            held_out_target: None,
            prompt_variant: PromptVariant::JsonQuestion,
            llm_model_id: DEFAULT_INFERENCE_MODEL.to_string(),
            cad_model_id: DEFAULT_CAD_MODEL.to_string(),
            variant: Variant::Full,
            seeds: vec![0, 1, 2, 3, 4],
            split_seed: 0,
            demo_seed: 0,
            cad_retries: 1,
            train: TrainConfig::linear_bag(dataset),
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        ExperimentConfig {
            variant,
            ..self.clone()
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        match self.protocol {
            Protocol::InTarget => SplitSpec::in_target(),
            Protocol::ZeroShot => SplitSpec::zero_shot(self.held_out_target.clone().unwrap_or_default(), self.split_seed),
        }
    }

    /// Short stable digest of the whole configuration; names the run directory.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..12].to_string()
    }
}

/// Parse-path counts and provider failures of one inference pass.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InferenceStats {
    pub json_block: usize,
    pub keyword_fallback: usize,
    pub failed_default: usize,
    pub provider_failures: usize,
    pub cached: usize,
}

impl InferenceStats {
    fn add(&mut self, other: &InferenceStats) {
        self.json_block += other.json_block;
        self.keyword_fallback += other.keyword_fallback;
        self.failed_default += other.failed_default;
        self.provider_failures += other.provider_failures;
        self.cached += other.cached;
    }
}

/// One stance judgment per example. A provider failure is recorded as a
/// `FailedDefault` judgment on the dataset's fallback label; the pass fails
/// only when every request failed.
pub fn run_inference(
    examples: &[StanceExample],
    kind: PromptKind,
    variant: PromptVariant,
    demos: Option<&CotDemoSet>,
    gateway: &Gateway,
    decoding: &Decoding,
) -> Result<(Vec<LlmJudgment>, InferenceStats)> {
    let mut stats = InferenceStats::default();
    if examples.is_empty() {
        return Ok((Vec::new(), stats));
    }
    let requests = examples
        .iter()
        .map(|ex| render_prompt_variant(kind, variant, ex, demos).map(|p| decoding.request(p)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(stage(Stage::Inference))?;
    let responses = gateway.complete_all(&requests);
    let mut judgments = Vec::with_capacity(examples.len());
    let mut last_error = None;
    for ((ex, req), resp) in examples.iter().zip(&requests).zip(responses) {
        let fallback = ex.dataset.fallback_label();
        let (raw, cached, parsed) = match resp {
            Ok(r) => {
                let parsed = parse_stance_response(&r.raw_text, ex.dataset.label_set(), fallback);
                (r.raw_text, r.cached, parsed)
            }
            Err(e) => {
                log::warn!("inference failed for {}: {e}", ex.id);
                stats.provider_failures += 1;
                last_error = Some(e.to_string());
                let parsed = ParsedStance {
                    stance: fallback,
                    rationale: String::new(),
                    parse_path: ParsePath::FailedDefault,
                };
                (String::new(), false, parsed)
            }
        };
        match parsed.parse_path {
            ParsePath::JsonBlock => stats.json_block += 1,
            ParsePath::KeywordFallback => stats.keyword_fallback += 1,
            ParsePath::FailedDefault => stats.failed_default += 1,
        }
        stats.cached += cached as usize;
        judgments.push(LlmJudgment {
            example_id: ex.id.clone(),
            prompt_kind: kind,
            prompt_variant: variant,
            raw_response: raw,
            parsed,
            model_id: req.model_id.clone(),
            cache_key: cache_key(req),
            cached,
        });
    }
    log::info!(
        "inference over {} examples: {} json, {} keyword, {} default, {} provider failures",
        examples.len(),
        stats.json_block,
        stats.keyword_fallback,
        stats.failed_default,
        stats.provider_failures
    );
    if stats.provider_failures == examples.len() {
        return Err(ExperimentError::StageFailure {
            stage: Stage::Inference,
            cause: format!(
                "all {} requests failed; last error: {}",
                examples.len(),
                last_error.unwrap_or_default()
            ),
        });
    }
    Ok((judgments, stats))
}

/// Annotates sentiment on every example that lacks it; returns how many were annotated.
pub fn annotate_missing(examples: &mut [StanceExample], gateway: &Gateway, decoding: &Decoding) -> Result<usize> {
    let mut n = 0;
    for ex in examples.iter_mut().filter(|e| e.sentiment.is_none()) {
        annotate_sentiment(ex, gateway, decoding).map_err(stage(Stage::Annotate))?;
        n += 1;
    }
    Ok(n)
}

/// Everything a run needs before calibrator training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub partition: Partition,
    pub demos: CotDemoSet,
    pub train_judgments: Vec<LlmJudgment>,
    pub val_judgments: Vec<LlmJudgment>,
    pub test_judgments: Vec<LlmJudgment>,
    pub cads: Vec<CounterfactualExample>,
    pub cad_judgments: Vec<LlmJudgment>,
    pub cad_stats: Option<AugmentStats>,
    pub inference: InferenceStats,
}

/// Splits, annotates, builds demonstrations, runs inference and (for
/// variants that use it) counterfactual augmentation.
pub fn prepare(config: &ExperimentConfig, examples: &[StanceExample], gateway: &Gateway) -> Result<Prepared> {
    let decoding = Decoding::new(&config.llm_model_id);
    let mut partition = make_splits(examples, &config.split_spec()).map_err(stage(Stage::Split))?;
    annotate_missing(&mut partition.test, gateway, &decoding)?;

    let demos = build_cot_demos(&partition.train, config.demo_seed, gateway, &decoding).map_err(stage(Stage::Demos))?;
    let v = config.prompt_variant;
    let mut inference = InferenceStats::default();
    let mut judge = |xs: &[StanceExample]| -> Result<Vec<LlmJudgment>> {
        let (j, s) = run_inference(xs, PromptKind::CotDemo, v, Some(&demos), gateway, &decoding)?;
        inference.add(&s);
        Ok(j)
    };
    let test_judgments = judge(&partition.test)?;
    let (train_judgments, val_judgments) = if config.variant == Variant::WoCalibration {
        (Vec::new(), Vec::new())
    } else {
        (judge(&partition.train)?, judge(&partition.val)?)
    };

    let (cads, cad_judgments, cad_stats) = match config.variant.augment_config(config.cad_retries) {
        Some(aug) => {
            let cad_decoding = Decoding::new(&config.cad_model_id);
            let (cads, stats) = augment(&partition.train, gateway, &cad_decoding, aug).map_err(stage(Stage::Augment))?;
            let parents: BTreeMap<&str, &StanceExample> =
                partition.train.iter().map(|e| (e.id.as_str(), e)).collect();
            let as_examples: Vec<StanceExample> = cads
                .iter()
                .map(|c| c.as_example(parents[c.parent_id.as_str()]))
                .collect();
            let judgments = judge(&as_examples)?;
            (cads, judgments, Some(stats))
        }
        None => (Vec::new(), Vec::new(), None),
    };

    Ok(Prepared {
        partition,
        demos,
        train_judgments,
        val_judgments,
        test_judgments,
        cads,
        cad_judgments,
        cad_stats,
        inference,
    })
}

fn pair<'a>(xs: &'a [StanceExample], js: &'a [LlmJudgment]) -> Vec<(StanceExample, LlmJudgment)> {
    xs.iter().cloned().zip(js.iter().cloned()).collect()
}

/// Training and validation records of a prepared run.
pub fn training_records(prepared: &Prepared) -> Result<(Vec<CalibrationRecord>, Vec<CalibrationRecord>)> {
    let p = &prepared.partition;
    let cads: Vec<(CounterfactualExample, LlmJudgment)> = prepared
        .cads
        .iter()
        .cloned()
        .zip(prepared.cad_judgments.iter().cloned())
        .collect();
    let train = assemble_training_set(&pair(&p.train, &prepared.train_judgments), &cads).map_err(stage(Stage::Train))?;
    let val = assemble_training_set(&pair(&p.val, &prepared.val_judgments), &[]).map_err(stage(Stage::Train))?;
    Ok((train, val))
}

fn entry(ex: &StanceExample, pred: StanceLabel) -> PredictionEntry {
    PredictionEntry {
        id: ex.id.clone(),
        gold: ex.gold_stance,
        pred,
        sentiment: ex.sentiment,
        target: ex.target.clone(),
        dataset: ex.dataset,
    }
}

/// Test predictions taken directly from the parsed LLM judgments.
pub fn raw_predictions(test: &[StanceExample], judgments: &[LlmJudgment]) -> PredictionLog {
    PredictionLog::new(
        test.iter()
            .zip(judgments)
            .map(|(ex, j)| entry(ex, j.parsed.stance))
            .collect(),
    )
}

/// Outcome of one training seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub predictions: PredictionLog,
    pub report: BiasReport,
    pub steps: Vec<crate::calibration::StepLog>,
    pub model: Option<crate::calibration::CalibratorModel>,
}

fn run_seed(config: &ExperimentConfig, prepared: &Prepared, records: &(Vec<CalibrationRecord>, Vec<CalibrationRecord>), seed: u64) -> Result<SeedRun> {
    let test = &prepared.partition.test;
    if config.variant == Variant::WoCalibration {
        let predictions = raw_predictions(test, &prepared.test_judgments);
        let report = bias_report(&predictions, config.dataset)?;
        return Ok(SeedRun {
            seed,
            predictions,
            report,
            steps: Vec::new(),
            model: None,
        });
    }
    let outcome = train(&records.0, &records.1, &config.train, seed).map_err(stage(Stage::Train))?;
    let predictions = PredictionLog::new(
        test.iter()
            .zip(&prepared.test_judgments)
            .map(|(ex, j)| entry(ex, predict(&outcome.model, &serialize_record(ex, j)).1))
            .collect(),
    );
    let report = bias_report(&predictions, config.dataset)?;
    Ok(SeedRun {
        seed,
        predictions,
        report,
        steps: outcome.steps,
        model: Some(outcome.model),
    })
}

/// Trains and evaluates every seed of `config` on a prepared run. Seeds run
/// on separate threads; results come back in seed order.
pub fn run_seeds(config: &ExperimentConfig, prepared: &Prepared) -> Result<Vec<SeedRun>> {
    let records = if config.variant == Variant::WoCalibration {
        (Vec::new(), Vec::new())
    } else {
        training_records(prepared)?
    };
    std::thread::scope(|s| {
        let handles: Vec<_> = config
            .seeds
            .iter()
            .map(|&seed| {
                let records = &records;
                s.spawn(move || run_seed(config, prepared, records, seed))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed thread panicked")).collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadSummary {
    pub requested: usize,
    pub valid: usize,
    pub rejected: usize,
    pub unparseable: usize,
    pub skipped_neutral: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub config_digest: String,
    pub f1_mean: f64,
    pub f1_per_seed: Vec<f64>,
    /// Seed-averaged bias report of the test predictions.
    pub bias: BiasReport,
    pub per_seed: Vec<BiasReport>,
    /// Seed-averaged macro F1 per test target.
    pub per_target_f1: BTreeMap<String, f64>,
    /// Seed-averaged normalised recall profiles, keyed `sentiment` / `target`
    /// and then `<subset>|<label>`.
    pub profiles: BTreeMap<String, BTreeMap<String, f64>>,
    /// Metrics of the parsed LLM judgments on the test split.
    pub raw_llm: BiasReport,
    pub inference: InferenceStats,
    pub cad: Option<CadSummary>,
    /// Wall-clock time; kept out of the report JSON so reruns compare byte for byte.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

fn seed_average<K: Ord + Clone>(maps: &[BTreeMap<K, f64>]) -> BTreeMap<K, f64> {
    let mut sum: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for m in maps {
        for (k, v) in m {
            let slot = sum.entry(k.clone()).or_insert((0.0, 0));
            slot.0 += v;
            slot.1 += 1;
        }
    }
    sum.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

fn per_target_f1(log: &PredictionLog, kind: DatasetKind) -> BTreeMap<String, f64> {
    let mut targets: Vec<&str> = log.entries.iter().map(|e| e.target.as_str()).collect();
    targets.sort_unstable();
    targets.dedup();
    targets
        .into_iter()
        .map(|t| (t.to_string(), macro_f1(&log.filter(|e| e.target == t), kind)))
        .collect()
}

fn profile(log: &PredictionLog, by_target: bool) -> BTreeMap<String, f64> {
    let raw = if by_target {
        normalized_recall_profile(log, |e| e.target.clone())
    } else {
        normalized_recall_profile(log, |e| e.sentiment.map(|s| s.as_str().to_string()).unwrap_or_default())
    };
    raw.into_iter()
        .filter_map(|((k, l), v)| v.map(|v| (format!("{k}|{l}"), v)))
        .collect()
}

/// Builds the aggregate report from the per-seed runs.
pub fn aggregate(config: &ExperimentConfig, prepared: &Prepared, seeds: &[SeedRun]) -> Result<ExperimentReport> {
    let f1_per_seed: Vec<f64> = seeds.iter().map(|s| s.report.macro_f1).collect();
    let f1_mean = if f1_per_seed.is_empty() {
        0.0
    } else {
        f1_per_seed.iter().sum::<f64>() / f1_per_seed.len() as f64
    };
    let per_seed: Vec<BiasReport> = seeds.iter().map(|s| s.report.clone()).collect();
    let targets: Vec<_> = seeds.iter().map(|s| per_target_f1(&s.predictions, config.dataset)).collect();
    let mut profiles = BTreeMap::new();
    profiles.insert(
        "sentiment".to_string(),
        seed_average(&seeds.iter().map(|s| profile(&s.predictions, false)).collect::<Vec<_>>()),
    );
    profiles.insert(
        "target".to_string(),
        seed_average(&seeds.iter().map(|s| profile(&s.predictions, true)).collect::<Vec<_>>()),
    );
    let raw = raw_predictions(&prepared.partition.test, &prepared.test_judgments);
    Ok(ExperimentReport {
        config: config.clone(),
        config_digest: config.digest(),
        f1_mean,
        f1_per_seed,
        bias: mean_report(&per_seed),
        per_seed,
        per_target_f1: seed_average(&targets),
        profiles,
        raw_llm: bias_report(&raw, config.dataset)?,
        inference: prepared.inference.clone(),
        cad: prepared.cad_stats.as_ref().map(|s| CadSummary {
            requested: s.requested,
            valid: s.valid,
            rejected: s.rejected,
            unparseable: s.unparseable,
            skipped_neutral: s.skipped_neutral,
        }),
        runtime_seconds: 0.0,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(stage(Stage::Persist))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(stage(Stage::Persist))
}

/// Writes `<runs>/<digest>/{config,report,timing}.json` and per-seed
/// predictions, training logs, checkpoints and reports.
pub fn persist(runs_dir: &Path, report: &ExperimentReport, seeds: &[SeedRun]) -> Result<PathBuf> {
    let dir = runs_dir.join(&report.config_digest);
    fs::create_dir_all(&dir).map_err(stage(Stage::Persist))?;
    write_json(&dir.join("config.json"), &report.config)?;
    write_json(&dir.join("report.json"), report)?;
    write_json(
        &dir.join("timing.json"),
        &serde_json::json!({ "runtime_seconds": report.runtime_seconds }),
    )?;
    for s in seeds {
        let sd = dir.join(s.seed.to_string());
        fs::create_dir_all(&sd).map_err(stage(Stage::Persist))?;
        fs::write(sd.join("predictions.jsonl"), s.predictions.to_jsonl()).map_err(stage(Stage::Persist))?;
        write_json(&sd.join("report.json"), &s.report)?;
        if let Some(model) = &s.model {
            write_train_log(&sd.join("train_log.jsonl"), &s.steps).map_err(stage(Stage::Persist))?;
            save_checkpoint(&sd.join("checkpoint"), model, &report.config.train).map_err(stage(Stage::Persist))?;
        }
    }
    Ok(dir)
}

/// Prepares, trains every seed, aggregates and (when `runs_dir` is given) persists.
pub fn run_pipeline(
    config: &ExperimentConfig,
    examples: &[StanceExample],
    gateway: &Gateway,
    runs_dir: Option<&Path>,
) -> Result<ExperimentReport> {
    let started = Instant::now();
    let prepared = prepare(config, examples, gateway)?;
    let seeds = run_seeds(config, &prepared)?;
    let mut report = aggregate(config, &prepared, &seeds)?;
    report.runtime_seconds = started.elapsed().as_secs_f64();
    if let Some(dir) = runs_dir {
        persist(dir, &report, &seeds)?;
    }
    Ok(report)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Two-sided Welch t-test over per-seed scores.
pub fn significance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(ExperimentError::DegenerateInput(format!(
            "need two equal-length samples of at least 2 scores, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let n = a.len() as f64;
    let (sa, sb) = (va / n, vb / n);
    if sa + sb == 0.0 {
        if ma == mb {
            return Ok(1.0);
        }
        return Err(ExperimentError::DegenerateInput(
            "both samples have zero variance".to_string(),
        ));
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let dof = (sa + sb).powi(2) / (sa * sa / (n - 1.0) + sb * sb / (n - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| ExperimentError::DegenerateInput(e.to_string()))?;
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

/// Pearson r and p between bias values and F1 scores.
pub fn correlation_study(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    let (bias, f1): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    Ok(pearson(&bias, &f1)?)
}

/// Correlation of each bias measure with macro F1 across a set of reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub ssc: (f64, f64),
    pub tpb: (f64, f64),
}

pub fn correlation_table(reports: &[ExperimentReport]) -> Result<CorrelationTable> {
    let ssc: Vec<(f64, f64)> = reports.iter().map(|r| (r.bias.bias_ssc, r.f1_mean)).collect();
    let tpb: Vec<(f64, f64)> = reports.iter().map(|r| (r.bias.bias_tpb, r.f1_mean)).collect();
    Ok(CorrelationTable {
        ssc: correlation_study(&ssc)?,
        tpb: correlation_study(&tpb)?,
    })
}

impl CorrelationTable {
    pub fn render(&self) -> String {
        let mut out = format!("{:<10}  {:>10}  {:>12}\n", "Bias", "Pearson r", "p-value");
        for (name, (r, p)) in [("Bias-SSC", self.ssc), ("Bias-TPB", self.tpb)] {
            let _ = writeln!(out, "{name:<10}  {r:>10.4}  {p:>12.3e}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub system: Variant,
    /// Mean macro F1 under prompt variants 1, 2, 3.
    pub f1: [f64; 3],
    /// Population variance of the three values.
    pub variance: f64,
}

/// Variance of averaged F1 across the three prompt layouts, per system.
pub fn prompt_robustness(reports: &[ExperimentReport]) -> Result<Vec<RobustnessRow>> {
    let mut by_system: BTreeMap<Variant, [Option<f64>; 3]> = BTreeMap::new();
    for r in reports {
        let slot = r.config.prompt_variant.number() as usize - 1;
        by_system.entry(r.config.variant).or_default()[slot] = Some(r.f1_mean);
    }
    by_system
        .into_iter()
        .map(|(system, f1)| {
            let [Some(a), Some(b), Some(c)] = f1 else {
                return Err(ExperimentError::IncompleteRuns(system.display_name().to_string()));
            };
            let m = (a + b + c) / 3.0;
            let variance = ((a - m).powi(2) + (b - m).powi(2) + (c - m).powi(2)) / 3.0;
            Ok(RobustnessRow {
                system,
                f1: [a, b, c],
                variance,
            })
        })
        .collect()
}

pub fn render_robustness(rows: &[RobustnessRow]) -> String {
    let mut out = format!(
        "{:<20}  {:>9}  {:>9}  {:>9}  {:>9}\n",
        "System", "Prompt 1", "Prompt 2", "Prompt 3", "Variance"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<20}  {:>9.2}  {:>9.2}  {:>9.2}  {:>9.4}",
            r.system.display_name(),
            r.f1[0],
            r.f1[1],
            r.f1[2],
            r.variance
        );
    }
    out
}

/// Per-target macro F1 with an average column; one row per system.
pub fn render_f1_table(rows: &[(String, &ExperimentReport)]) -> String {
    let mut targets: Vec<&String> = rows.iter().flat_map(|(_, r)| r.per_target_f1.keys()).collect();
    targets.sort();
    targets.dedup();
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
    let col_w = targets.iter().map(|t| t.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<name_w$}", "System");
    for t in &targets {
        let _ = write!(out, "  {t:>col_w$}");
    }
    let _ = writeln!(out, "  {:>col_w$}", "Avg");
    for (name, r) in rows {
        let _ = write!(out, "{name:<name_w$}");
        for t in &targets {
            match r.per_target_f1.get(*t) {
                Some(v) => {
                    let _ = write!(out, "  {v:>col_w$.2}");
                }
                None => {
                    let _ = write!(out, "  {:>col_w$}", "-");
                }
            }
        }
        let _ = writeln!(out, "  {:>col_w$.2}", r.f1_mean);
    }
    out
}

/// Bar charts of the seed-averaged normalised recall profiles: one SVG per
/// (dataset, subset kind), one bar series per report.
pub fn write_profile_plots(reports: &[(String, ExperimentReport)], out_dir: &Path) -> Result<Vec<PathBuf>> {
    use plotters::prelude::*;

    fs::create_dir_all(out_dir).map_err(stage(Stage::Persist))?;
    let mut datasets: Vec<DatasetKind> = reports.iter().map(|(_, r)| r.config.dataset).collect();
    datasets.sort();
    datasets.dedup();
    let mut written = Vec::new();
    for dataset in datasets {
        let group: Vec<&(String, ExperimentReport)> =
            reports.iter().filter(|(_, r)| r.config.dataset == dataset).collect();
        for kind in ["sentiment", "target"] {
            let mut cats: Vec<&String> = group
                .iter()
                .flat_map(|(_, r)| r.profiles.get(kind).into_iter().flat_map(|p| p.keys()))
                .collect();
            cats.sort();
            cats.dedup();
            let path = out_dir.join(format!("profile_{dataset}_{kind}.svg"));
            let max = group
                .iter()
                .flat_map(|(_, r)| r.profiles.get(kind).into_iter().flat_map(|p| p.values()))
                .fold(0.05f64, |m, v| m.max(v.abs()))
                * 1.1;
            let width = (160 + 60 * cats.len().max(1)) as u32;
            let draw = || -> std::result::Result<(), Box<dyn std::error::Error>> {
                let root = SVGBackend::new(&path, (width.max(480), 420)).into_drawing_area();
                root.fill(&WHITE)?;
                let n = cats.len().max(1);
                let mut chart = ChartBuilder::on(&root)
                    .caption(format!("{dataset}: normalised recall by {kind}"), ("sans-serif", 18))
                    .margin(10)
                    .x_label_area_size(90)
                    .y_label_area_size(50)
                    .build_cartesian_2d(0f64..n as f64, -max..max)?;
                let labels: Vec<String> = cats.iter().map(|c| c.to_string()).collect();
                chart
                    .configure_mesh()
                    .x_labels(n)
                    .x_label_formatter(&|x| {
                        let i = x.floor() as usize;
                        labels.get(i).cloned().unwrap_or_default()
                    })
                    .x_label_style(("sans-serif", 10).into_font().transform(FontTransform::Rotate90))
                    .y_desc("subset recall - overall recall")
                    .draw()?;
                let series = group.len().max(1) as f64;
                for (si, (name, r)) in group.iter().enumerate() {
                    let color = Palette99::pick(si).to_rgba();
                    let profile = r.profiles.get(kind);
                    let bars = cats.iter().enumerate().filter_map(|(ci, c)| {
                        let v = *profile?.get(*c)?;
                        let x0 = ci as f64 + 0.1 + 0.8 * si as f64 / series;
                        let x1 = x0 + 0.8 / series;
                        Some(Rectangle::new([(x0, 0.0), (x1, v)], color.filled()))
                    });
                    chart
                        .draw_series(bars)?
                        .label(name.as_str())
                        .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
                }
                chart
                    .configure_series_labels()
                    .background_style(WHITE.mix(0.8))
                    .border_style(BLACK)
                    .draw()?;
                root.present()?;
                Ok(())
            };
            draw().map_err(|e| ExperimentError::StageFailure {
                stage: Stage::Persist,
                cause: e.to_string(),
            })?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welch_examples() {
        let same = [80.0, 81.0, 80.0, 81.0, 80.0];
        assert_eq!(significance(&same, &same).unwrap(), 1.0);
        let low = [60.0, 61.0, 60.0, 61.0, 60.0];
        assert!(significance(&same, &low).unwrap() < 0.001);
        assert_eq!(significance(&same, &low).unwrap(), significance(&low, &same).unwrap());
        assert!(significance(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert_eq!(significance(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("wo_cad".parse::<Variant>().unwrap(), Variant::WoCad);
        assert_eq!("FULL".parse::<Variant>().unwrap(), Variant::Full);
        assert_eq!("w/o-calibration".parse::<Variant>().unwrap(), Variant::WoCalibration);
        assert!("bogus".parse::<Variant>().is_err());
    }

    #[test]
    fn digest_tracks_config() {
        let a = ExperimentConfig::new(DatasetKind::Sem16);
        assert_eq!(a.digest(), a.clone().digest());
        assert_ne!(a.digest(), a.with_variant(Variant::WoCad).digest());
    }

    #[test]
    fn anti_correlated_study() {
        let pairs: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 100.0 - 2.0 * i as f64)).collect();
        let (r, _) = correlation_study(&pairs).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = (0..6).map(|i| (3.0, i as f64)).collect();
        assert!(correlation_study(&flat).is_err());
    }
}
