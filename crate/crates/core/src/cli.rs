//! The `stance-calib` command line.
//!
//! Settings come from an optional TOML file with one section per module,
//! then `--set section.key=value` overrides, then dedicated flags. Exit
//! codes: 0 success, 2 usage or input error, 3 stage failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bias_metrics::{bias_report, render_bias_table};
use crate::calibration::{Backend, CausalLossMode, TrainConfig};
use crate::corpus::{
    ingest_raw, load_dataset, make_splits, render_count_table, write_dataset, DatasetKind, IngestOutcome, Protocol,
    Split, StanceExample,
};
use crate::counterfactual::{augment, AugmentConfig};
use crate::experiments::{
    self, annotate_missing, correlation_table, prompt_robustness, raw_predictions, render_f1_table,
    render_robustness, run_inference, ExperimentConfig, ExperimentError, ExperimentReport, Variant,
};
use crate::fixture::{synthetic_corpus, FixtureSpec, SyntheticLlm};
use crate::llm_gateway::{
    Decoding, Gateway, GatewayConfig, HttpProvider, Provider, RetryPolicy, API_KEY_ENV, DEFAULT_CAD_MODEL,
    DEFAULT_INFERENCE_MODEL,
};
use crate::prompting::{build_cot_demos, PromptKind, PromptVariant};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Stage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Stage(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Stage(m) => f.write_str(m),
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::IncompleteRuns(_) | ExperimentError::DegenerateInput(_) => CliError::Usage(e.to_string()),
            _ => CliError::Stage(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "stance-calib", version, about = "Stance bias measurement and LLM judgment calibration")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a setting, e.g. `--set calibration.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Directory for cached LLM responses.
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Directory for outputs and run artifacts.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Offline mode: answer prompts with the scripted synthetic model.
    #[arg(long, global = true)]
    pub mock: bool,
    /// Canonical JSONL dataset; with `--mock` and no data the synthetic corpus is used.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dataset: Option<DatasetKind>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert raw benchmark files into canonical JSONL and print label counts.
    Ingest(IngestArgs),
    /// Annotate missing sentiment labels with the LLM.
    Annotate(OutArg),
    /// Run CoT-Demo inference on one split and write the judgments.
    Infer(InferArgs),
    /// Generate validated counterfactuals for the training split.
    Augment(OutArg),
    /// Train the calibrator for every seed and save checkpoints.
    Train(RunArgs),
    /// Full pipeline: inference, augmentation, training and evaluation.
    Run(RunArgs),
    /// Merge run reports into tables, optionally with plots.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Output JSONL path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutArg {
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args, Default, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub protocol: Option<Protocol>,
    /// Held-out target for the zero-shot protocol (short codes like DT work).
    #[arg(long = "held-out")]
    pub held_out: Option<String>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub prompt_variant: Option<PromptVariant>,
    /// Number of training seeds (0, 1, ..., N-1).
    #[arg(long)]
    pub seeds: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories, or directories containing run directories.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Also write normalised-recall bar charts.
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub dataset: DatasetKind,
    pub data: Option<PathBuf>,
    pub protocol: Protocol,
    pub held_out_target: Option<String>,
    pub split_seed: u64,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        CorpusSettings {
            dataset: DatasetKind::Sem16,
            data: None,
            protocol: Protocol::InTarget,
            held_out_target: None,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptingSettings {
    pub prompt_variant: PromptVariant,
    pub demo_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySettings {
    pub model: String,
    pub cad_model: String,
    pub base_url: String,
    pub cache_dir: PathBuf,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub timeout_secs: u64,
    pub min_interval_ms: u64,
    pub mock: bool,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            model: DEFAULT_INFERENCE_MODEL.to_string(),
            cad_model: DEFAULT_CAD_MODEL.to_string(),
            base_url: "https://api.openai.com/v1".to_string(),
            cache_dir: PathBuf::from(".stance-calib/cache"),
            max_in_flight: 8,
            max_retries: 5,
            timeout_secs: 120,
            min_interval_ms: 0,
            mock: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterfactualSettings {
    pub retries: u32,
}

impl Default for CounterfactualSettings {
    fn default() -> Self {
        CounterfactualSettings { retries: 1 }
    }
}

/// Unset fields keep the linear-backend preset.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    pub backend: Option<Backend>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub causal_loss_mode: Option<CausalLossMode>,
    pub drop_last: Option<bool>,
    pub hash_bits: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            variant: Variant::Full,
            seeds: vec![0, 1, 2, 3, 4],
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// The resolved settings file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub corpus: CorpusSettings,
    pub prompting: PromptingSettings,
    pub llm_gateway: GatewaySettings,
    pub counterfactual: CounterfactualSettings,
    pub calibration: CalibrationSettings,
    pub experiments: ExperimentSettings,
}

fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `section.key=value` overrides to a TOML table.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override {o:?} is not KEY=VALUE")))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        let (last, parents) = path.split_last().expect("split yields one part");
        let mut cursor = &mut *table;
        for p in parents {
            let entry = cursor
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cursor = entry
                .as_table_mut()
                .ok_or_else(|| CliError::Usage(format!("{key}: {p} is not a section")))?;
        }
        cursor.insert(last.to_string(), parse_override_value(value.trim()));
    }
    Ok(())
}

impl Settings {
    /// File values, then `--set` overrides, then dedicated flags.
    pub fn resolve(common: &Common) -> Result<Settings> {
        let mut table = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        apply_overrides(&mut table, &common.overrides)?;
        let mut s: Settings = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| usage(format!("invalid settings: {e}")))?;
        if let Some(d) = &common.cache_dir {
            s.llm_gateway.cache_dir = d.clone();
        }
        if let Some(d) = &common.out_dir {
            s.experiments.out_dir = d.clone();
        }
        if common.mock {
            s.llm_gateway.mock = true;
        }
        if let Some(d) = &common.data {
            s.corpus.data = Some(d.clone());
        }
        if let Some(d) = common.dataset {
            s.corpus.dataset = d;
        }
        Ok(s)
    }

    fn apply_run_args(&mut self, args: &RunArgs) {
        if let Some(p) = args.protocol {
            self.corpus.protocol = p;
        }
        if let Some(h) = &args.held_out {
            self.corpus.held_out_target = Some(h.clone());
            if args.protocol.is_none() {
                self.corpus.protocol = Protocol::ZeroShot;
            }
        }
        if let Some(v) = args.variant {
            self.experiments.variant = v;
        }
        if let Some(v) = args.prompt_variant {
            self.prompting.prompt_variant = v;
        }
        if let Some(n) = args.seeds {
            self.experiments.seeds = (0..n).collect();
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let c = &self.calibration;
        let base = TrainConfig::linear_bag(self.corpus.dataset);
        TrainConfig {
            backend: c.backend.unwrap_or(base.backend),
            batch_size: c.batch_size.unwrap_or(base.batch_size),
            learning_rate: c.learning_rate.unwrap_or(base.learning_rate),
            weight_decay: c.weight_decay.unwrap_or(base.weight_decay),
            epochs: c.epochs.unwrap_or(base.epochs),
            causal_loss_mode: c.causal_loss_mode.unwrap_or(base.causal_loss_mode),
            drop_last: c.drop_last.unwrap_or(base.drop_last),
            hash_bits: c.hash_bits.unwrap_or(base.hash_bits),
            seeds: self.experiments.seeds.clone(),
            ..base
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        let held_out = self
            .corpus
            .held_out_target
            .as_deref()
            .map(|t| self.corpus.dataset.resolve_target(t));
        ExperimentConfig {
            dataset: self.corpus.dataset,
            protocol: self.corpus.protocol,
            held_out_target: held_out,
            prompt_variant: self.prompting.prompt_variant,
            llm_model_id: self.llm_gateway.model.clone(),
            cad_model_id: self.llm_gateway.cad_model.clone(),
            variant: self.experiments.variant,
            seeds: self.experiments.seeds.clone(),
            split_seed: self.corpus.split_seed,
            demo_seed: self.prompting.demo_seed,
            cad_retries: self.counterfactual.retries,
            train: self.train_config(),
        }
    }

    pub fn gateway(&self) -> Result<Gateway> {
        let g = &self.llm_gateway;
        let provider: Arc<dyn Provider> = if g.mock {
            Arc::new(SyntheticLlm::default().provider())
        } else {
            if std::env::var(API_KEY_ENV).is_err() {
                log::warn!("{API_KEY_ENV} is not set; only cached responses will succeed");
            }
            Arc::new(HttpProvider::new(
                g.base_url.clone(),
                std::env::var(API_KEY_ENV).ok(),
                Duration::from_secs(g.timeout_secs),
            ))
        };
        let config = GatewayConfig {
            max_in_flight: g.max_in_flight.max(1),
            retry: RetryPolicy {
                max_retries: g.max_retries,
                ..RetryPolicy::default()
            },
            min_interval: Duration::from_millis(g.min_interval_ms),
        };
        Gateway::new(provider, &g.cache_dir, config).map_err(|e| CliError::Stage(e.to_string()))
    }

    /// The dataset named by the settings, or the synthetic corpus in mock mode.
    pub fn examples(&self) -> Result<Vec<StanceExample>> {
        match &self.corpus.data {
            Some(path) => load_dataset(path, self.corpus.dataset).map_err(usage),
            None if self.llm_gateway.mock && self.corpus.dataset == DatasetKind::Sem16 => {
                Ok(synthetic_corpus(&FixtureSpec::default()))
            }
            None => Err(CliError::Usage(
                "no dataset: pass --data (or --mock for the synthetic sem16 corpus)".to_string(),
            )),
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let mut settings = Settings::resolve(&cli.common)?;
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&settings, &args),
        Command::Annotate(args) => cmd_annotate(&settings, &args.out),
        Command::Infer(args) => {
            settings.apply_run_args(&args.run);
            cmd_infer(&settings, args.split, &args.out)
        }
        Command::Augment(args) => cmd_augment(&settings, &args.out),
        Command::Train(args) => {
            settings.apply_run_args(&args);
            cmd_train(&settings)
        }
        Command::Run(args) => {
            settings.apply_run_args(&args);
            cmd_run(&settings)
        }
        Command::Report(args) => cmd_report(&settings, &args),
    }
}

fn cmd_ingest(settings: &Settings, args: &IngestArgs) -> Result<()> {
    let kind = settings.corpus.dataset;
    let mut outcome = IngestOutcome::default();
    let files = [(Split::Train, &args.train), (Split::Val, &args.val), (Split::Test, &args.test)];
    if files.iter().all(|(_, f)| f.is_none()) {
        return Err(CliError::Usage("pass at least one of --train, --val, --test".into()));
    }
    for (split, file) in files {
        if let Some(path) = file {
            ingest_raw(path, kind, split, &mut outcome).map_err(usage)?;
        }
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| usage(format!("{}: {e}", parent.display())))?;
    }
    write_dataset(&args.out, &outcome.examples).map_err(usage)?;
    print!("{}", render_count_table(kind, &outcome.examples));
    if !outcome.skipped.is_empty() {
        println!("skipped {} rows without text", outcome.skipped.len());
    }
    Ok(())
}

fn cmd_annotate(settings: &Settings, out: &Path) -> Result<()> {
    let mut examples = settings.examples()?;
    let gateway = settings.gateway()?;
    let n = annotate_missing(&mut examples, &gateway, &Decoding::new(&settings.llm_gateway.model))?;
    write_dataset(out, &examples).map_err(usage)?;
    println!("annotated {n} of {} examples", examples.len());
    Ok(())
}

fn cmd_infer(settings: &Settings, split: Split, out: &Path) -> Result<()> {
    let config = settings.experiment_config();
    let examples = settings.examples()?;
    let gateway = settings.gateway()?;
    let decoding = Decoding::new(&config.llm_model_id);
    let mut part = make_splits(&examples, &config.split_spec()).map_err(usage)?;
    let demos =
        build_cot_demos(&part.train, config.demo_seed, &gateway, &decoding).map_err(|e| CliError::Stage(e.to_string()))?;
    let chosen = match split {
        Split::Train => &mut part.train,
        Split::Val => &mut part.val,
        Split::Test => &mut part.test,
    };
    let (judgments, stats) = run_inference(
        chosen,
        PromptKind::CotDemo,
        config.prompt_variant,
        Some(&demos),
        &gateway,
        &decoding,
    )?;
    let mut lines = String::new();
    for j in &judgments {
        lines.push_str(&serde_json::to_string(j).expect("judgment serializes"));
        lines.push('\n');
    }
    fs::write(out, lines).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    println!(
        "{} judgments: {} json, {} keyword, {} default, {} provider failures",
        judgments.len(),
        stats.json_block,
        stats.keyword_fallback,
        stats.failed_default,
        stats.provider_failures
    );
    if chosen.iter().all(|e| e.sentiment.is_some()) && !chosen.is_empty() {
        let log = raw_predictions(chosen, &judgments);
        if let Ok(r) = bias_report(&log, config.dataset) {
            println!(
                "macro F1 {:.2}  Bias-SSC {:.2}  Bias-TPB {:.2}",
                r.macro_f1, r.bias_ssc, r.bias_tpb
            );
        }
    }
    Ok(())
}

fn cmd_augment(settings: &Settings, out: &Path) -> Result<()> {
    let config = settings.experiment_config();
    let examples = settings.examples()?;
    let gateway = settings.gateway()?;
    let part = make_splits(&examples, &config.split_spec()).map_err(usage)?;
    let aug = AugmentConfig {
        retries: config.cad_retries,
        ..AugmentConfig::default()
    };
    let (cads, stats) = augment(&part.train, &gateway, &Decoding::new(&config.cad_model_id), aug)
        .map_err(|e| CliError::Stage(e.to_string()))?;
    let mut lines = String::new();
    for c in &cads {
        lines.push_str(&c.to_jsonl_row());
        lines.push('\n');
    }
    fs::write(out, lines).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    println!(
        "{} requested, {} valid, {} rejected, {} unparseable, {} neutral parents skipped",
        stats.requested, stats.valid, stats.rejected, stats.unparseable, stats.skipped_neutral
    );
    Ok(())
}

fn cmd_train(settings: &Settings) -> Result<()> {
    let config = settings.experiment_config();
    if config.variant == Variant::WoCalibration {
        return Err(CliError::Usage("the wo_calibration variant has nothing to train".into()));
    }
    let examples = settings.examples()?;
    let gateway = settings.gateway()?;
    let prepared = experiments::prepare(&config, &examples, &gateway)?;
    let seeds = experiments::run_seeds(&config, &prepared)?;
    let report = experiments::aggregate(&config, &prepared, &seeds)?;
    let dir = experiments::persist(&settings.experiments.out_dir, &report, &seeds)?;
    for s in &seeds {
        let last = s.steps.last().map(|l| l.loss_total).unwrap_or(f64::NAN);
        println!("seed {}: {} steps, final batch loss {last:.4}", s.seed, s.steps.len());
    }
    println!("checkpoints in {}", dir.display());
    Ok(())
}

fn print_summary(report: &ExperimentReport) {
    let name = report.config.variant.display_name().to_string();
    println!("{}", render_f1_table(&[(name.clone(), report)]));
    let rows = vec![("LLM".to_string(), report.raw_llm.clone()), (name, report.bias.clone())];
    println!("{}", render_bias_table(&rows, "sentiment:"));
    println!("{}", render_bias_table(&rows, "target:"));
}

fn cmd_run(settings: &Settings) -> Result<()> {
    let config = settings.experiment_config();
    let examples = settings.examples()?;
    let gateway = settings.gateway()?;
    let out = &settings.experiments.out_dir;
    let report = experiments::run_pipeline(&config, &examples, &gateway, Some(out))?;
    let dir = out.join(&report.config_digest);
    let echoed = toml::to_string(settings).map_err(|e| CliError::Stage(e.to_string()))?;
    fs::write(dir.join("settings.toml"), echoed).map_err(|e| CliError::Stage(e.to_string()))?;
    print_summary(&report);
    println!("report: {}", dir.join("report.json").display());
    Ok(())
}

/// Every `report.json` directly in `path` or one level below it.
fn find_reports(path: &Path) -> Vec<PathBuf> {
    let direct = path.join("report.json");
    if direct.is_file() {
        return vec![direct];
    }
    let mut found: Vec<PathBuf> = fs::read_dir(path)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path().join("report.json"))
        .filter(|p| p.is_file())
        .collect();
    found.sort();
    found
}

fn cmd_report(settings: &Settings, args: &ReportArgs) -> Result<()> {
    let mut reports: Vec<(String, ExperimentReport)> = Vec::new();
    for dir in &args.runs {
        if !dir.exists() {
            return Err(CliError::Usage(format!("{}: no such directory", dir.display())));
        }
        for path in find_reports(dir) {
            let text = fs::read_to_string(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let report: ExperimentReport =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let c = &report.config;
            let mut name = format!("{} p{}", c.variant.display_name(), c.prompt_variant.number());
            if let Some(t) = &c.held_out_target {
                name.push_str(&format!(" [{t}]"));
            }
            reports.push((name, report));
        }
    }
    if reports.is_empty() {
        return Err(CliError::Usage("no run reports found".into()));
    }
    let rows: Vec<(String, &ExperimentReport)> = reports.iter().map(|(n, r)| (n.clone(), r)).collect();
    println!("{}", render_f1_table(&rows));
    let bias_rows: Vec<(String, _)> = reports.iter().map(|(n, r)| (n.clone(), r.bias.clone())).collect();
    println!("{}", render_bias_table(&bias_rows, "sentiment:"));
    println!("{}", render_bias_table(&bias_rows, "target:"));
    let all: Vec<ExperimentReport> = reports.iter().map(|(_, r)| r.clone()).collect();
    if all.len() >= 3 {
        match correlation_table(&all) {
            Ok(t) => println!("{}", t.render()),
            Err(e) => log::info!("correlation table skipped: {e}"),
        }
    }
    if let Ok(rows) = prompt_robustness(&all) {
        println!("{}", render_robustness(&rows));
    }
    if args.plots {
        let dir = settings.experiments.out_dir.join("plots");
        let written = experiments::write_profile_plots(&reports, &dir)?;
        for p in written {
            println!("plot: {}", p.display());
        }
    }
    Ok(())
}
