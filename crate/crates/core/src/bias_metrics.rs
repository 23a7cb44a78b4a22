//! Recall-standard-deviation bias measures, macro F1 and correlation.
//!
//! All reported values are percentages. RStd is the population standard
//! deviation of per-label recalls inside one subset of the prediction log;
//! Bias-SSC averages it over sentiment subsets and Bias-TPB over target
//! subsets. Labels with no gold instances in a subset are left out of that
//! subset's RStd and counted in `n_excluded_labels`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::corpus::{DatasetKind, Sentiment, StanceLabel};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("subset {0:?} has no gold labels")]
    EmptySubset(String),
    #[error("entry {0} has no sentiment label")]
    MissingSentiment(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("malformed prediction log row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub id: String,
    pub gold: StanceLabel,
    pub pred: StanceLabel,
    pub sentiment: Option<Sentiment>,
    pub target: String,
    pub dataset: DatasetKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionLog {
    pub entries: Vec<PredictionEntry>,
}

impl PredictionLog {
    pub fn new(entries: Vec<PredictionEntry>) -> Self {
        PredictionLog { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dataset(&self) -> Option<DatasetKind> {
        self.entries.first().map(|e| e.dataset)
    }

    fn label_set(&self) -> &'static [StanceLabel] {
        self.dataset().unwrap_or(DatasetKind::Sem16).label_set()
    }

    pub fn filter<F: Fn(&PredictionEntry) -> bool>(&self, keep: F) -> PredictionLog {
        PredictionLog {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }

    /// JSONL with one `{"id","gold","pred","sentiment","target","dataset"}` row per entry.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let row = serde_json::json!({
                "id": e.id,
                "gold": e.gold,
                "pred": e.pred,
                "sentiment": e.sentiment,
                "target": e.target,
                "dataset": e.dataset,
            });
            out.push_str(&row.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: PredictionEntry = serde_json::from_str(line).map_err(|e| MetricsError::MalformedRow {
                line: i + 1,
                reason: e.to_string(),
            })?;
            entries.push(e);
        }
        Ok(PredictionLog { entries })
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let mut text = String::new();
        for line in BufReader::new(fs::File::open(path)?).lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::from_jsonl(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
    }
}

/// Recall per label; `None` where the label has no gold instances.
pub fn recall_per_label(log: &PredictionLog, label_set: &[StanceLabel]) -> BTreeMap<StanceLabel, Option<f64>> {
    label_set
        .iter()
        .map(|&label| {
            let support = log.entries.iter().filter(|e| e.gold == label).count();
            let tp = log.entries.iter().filter(|e| e.gold == label && e.pred == label).count();
            let recall = (support > 0).then(|| tp as f64 / support as f64);
            (label, recall)
        })
        .collect()
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Population standard deviation of recalls over the present labels, ×100.
pub fn rstd(log: &PredictionLog, label_set: &[StanceLabel]) -> Result<f64> {
    let recalls: Vec<f64> = recall_per_label(log, label_set).into_values().flatten().collect();
    if recalls.is_empty() {
        return Err(MetricsError::EmptySubset(String::new()));
    }
    Ok(100.0 * population_std(&recalls))
}

/// Same statistic from precomputed recalls (fractions).
pub fn rstd_from_recalls(recalls: &[f64]) -> f64 {
    100.0 * population_std(recalls)
}

fn group_by<K: Ord + Clone, F: Fn(&PredictionEntry) -> K>(log: &PredictionLog, key: F) -> BTreeMap<K, PredictionLog> {
    let mut groups: BTreeMap<K, PredictionLog> = BTreeMap::new();
    for e in &log.entries {
        groups.entry(key(e)).or_default().entries.push(e.clone());
    }
    groups
}

fn sentiment_groups(log: &PredictionLog) -> Result<BTreeMap<Sentiment, PredictionLog>> {
    if let Some(e) = log.entries.iter().find(|e| e.sentiment.is_none()) {
        return Err(MetricsError::MissingSentiment(e.id.clone()));
    }
    Ok(group_by(log, |e| e.sentiment.expect("checked above")))
}

/// Mean RStd over the sentiment subsets present in the log.
pub fn bias_ssc(log: &PredictionLog) -> Result<f64> {
    let labels = log.label_set();
    let groups = sentiment_groups(log)?;
    if groups.is_empty() {
        return Err(MetricsError::EmptySubset("sentiment".into()));
    }
    let mut total = 0.0;
    for (s, sub) in &groups {
        total += rstd(sub, labels).map_err(|_| MetricsError::EmptySubset(s.as_str().into()))?;
    }
    Ok(total / groups.len() as f64)
}

/// Mean RStd over the distinct targets in the log.
pub fn bias_tpb(log: &PredictionLog) -> Result<f64> {
    let labels = log.label_set();
    let groups = group_by(log, |e| e.target.clone());
    if groups.is_empty() {
        return Err(MetricsError::EmptySubset("target".into()));
    }
    let mut total = 0.0;
    for (t, sub) in &groups {
        total += rstd(sub, labels).map_err(|_| MetricsError::EmptySubset(t.clone()))?;
    }
    Ok(total / groups.len() as f64)
}

/// One-vs-rest F1 with 0 for 0/0.
pub fn f1_for_label(log: &PredictionLog, label: StanceLabel) -> f64 {
    let tp = log.entries.iter().filter(|e| e.gold == label && e.pred == label).count() as f64;
    let predicted = log.entries.iter().filter(|e| e.pred == label).count() as f64;
    let actual = log.entries.iter().filter(|e| e.gold == label).count() as f64;
    let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
    let recall = if actual > 0.0 { tp / actual } else { 0.0 };
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Labels averaged by each dataset's official macro F1.
pub fn f1_labels(kind: DatasetKind) -> &'static [StanceLabel] {
    match kind {
        DatasetKind::Sem16 | DatasetKind::Pstance => &[StanceLabel::Favor, StanceLabel::Against],
        DatasetKind::Vast => &StanceLabel::ALL,
    }
}

/// Macro F1 in percent: favor/against for Sem16 and P-Stance, all three for VAST.
pub fn macro_f1(log: &PredictionLog, kind: DatasetKind) -> f64 {
    let labels = f1_labels(kind);
    100.0 * labels.iter().map(|&l| f1_for_label(log, l)).sum::<f64>() / labels.len() as f64
}

/// Subset recall minus whole-log recall per label; `None` where either is undefined.
pub fn normalized_recall_profile<K, F>(log: &PredictionLog, subset_key: F) -> BTreeMap<(K, StanceLabel), Option<f64>>
where
    K: Ord + Clone,
    F: Fn(&PredictionEntry) -> K,
{
    let labels = log.label_set();
    let overall = recall_per_label(log, labels);
    let mut out = BTreeMap::new();
    for (key, sub) in group_by(log, subset_key) {
        for (label, r) in recall_per_label(&sub, labels) {
            let delta = match (r, overall[&label]) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            };
            out.insert((key.clone(), label), delta);
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    /// Keys are `sentiment:<name>` and `target:<name>`.
    pub per_subset_rstd: BTreeMap<String, f64>,
    pub bias_ssc: f64,
    pub bias_tpb: f64,
    pub macro_f1: f64,
    /// Keys are `<subset>|<label>`; `all|<label>` is the whole log.
    pub recalls: BTreeMap<String, f64>,
    pub n_excluded_labels: BTreeMap<String, usize>,
}

fn add_subset(report: &mut BiasReport, key: String, log: &PredictionLog, labels: &[StanceLabel]) -> Result<f64> {
    let recalls = recall_per_label(log, labels);
    let excluded = recalls.values().filter(|r| r.is_none()).count();
    for (label, r) in &recalls {
        if let Some(r) = r {
            report.recalls.insert(format!("{key}|{label}"), *r);
        }
    }
    report.n_excluded_labels.insert(key.clone(), excluded);
    let value = rstd(log, labels).map_err(|_| MetricsError::EmptySubset(key.clone()))?;
    report.per_subset_rstd.insert(key, value);
    Ok(value)
}

/// Full report over one log. Sentiment labels must be present on every entry.
pub fn bias_report(log: &PredictionLog, kind: DatasetKind) -> Result<BiasReport> {
    let labels = kind.label_set();
    let mut report = BiasReport {
        macro_f1: macro_f1(log, kind),
        ..Default::default()
    };
    for (label, r) in recall_per_label(log, labels) {
        if let Some(r) = r {
            report.recalls.insert(format!("all|{label}"), r);
        }
    }

    let groups = sentiment_groups(log)?;
    let mut ssc = Vec::new();
    for (s, sub) in &groups {
        ssc.push(add_subset(&mut report, format!("sentiment:{s}"), sub, labels)?);
    }
    let mut tpb = Vec::new();
    for (t, sub) in group_by(log, |e| e.target.clone()) {
        tpb.push(add_subset(&mut report, format!("target:{t}"), &sub, labels)?);
    }
    let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    report.bias_ssc = mean(&ssc);
    report.bias_tpb = mean(&tpb);
    Ok(report)
}

/// Field-wise mean of several reports (e.g. one per training seed).
pub fn mean_report(reports: &[BiasReport]) -> BiasReport {
    let n = reports.len().max(1) as f64;
    let mut out = BiasReport::default();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut rcounts: BTreeMap<String, usize> = BTreeMap::new();
    for r in reports {
        out.bias_ssc += r.bias_ssc / n;
        out.bias_tpb += r.bias_tpb / n;
        out.macro_f1 += r.macro_f1 / n;
        for (k, v) in &r.per_subset_rstd {
            *out.per_subset_rstd.entry(k.clone()).or_insert(0.0) += v;
            *counts.entry(k.clone()).or_insert(0) += 1;
        }
        for (k, v) in &r.recalls {
            *out.recalls.entry(k.clone()).or_insert(0.0) += v;
            *rcounts.entry(k.clone()).or_insert(0) += 1;
        }
        for (k, v) in &r.n_excluded_labels {
            let slot = out.n_excluded_labels.entry(k.clone()).or_insert(0);
            *slot = (*slot).max(*v);
        }
    }
    for (k, v) in out.per_subset_rstd.iter_mut() {
        *v /= counts[k] as f64;
    }
    for (k, v) in out.recalls.iter_mut() {
        *v /= rcounts[k] as f64;
    }
    out
}

/// Aligned text table: one row per system, per-target RStd columns then the averages.
pub fn render_bias_table(rows: &[(String, BiasReport)], subset_prefix: &str) -> String {
    let mut columns: Vec<String> = Vec::new();
    for (_, r) in rows {
        for k in r.per_subset_rstd.keys() {
            if let Some(name) = k.strip_prefix(subset_prefix) {
                if !columns.iter().any(|c| c == name) {
                    columns.push(name.to_string());
                }
            }
        }
    }
    let avg_name = if subset_prefix.starts_with("sentiment") {
        "Bias-SSC"
    } else {
        "Bias-TPB"
    };
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
    let col_w = columns.iter().map(|c| c.len()).max().unwrap_or(8).max(8);
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "System");
    for c in &columns {
        let _ = write!(out, "  {c:>col_w$}");
    }
    let _ = writeln!(out, "  {avg_name:>col_w$}  {:>col_w$}", "F1");
    for (name, r) in rows {
        let _ = write!(out, "{name:<name_w$}");
        for c in &columns {
            match r.per_subset_rstd.get(&format!("{subset_prefix}{c}")) {
                Some(v) => {
                    let _ = write!(out, "  {v:>col_w$.2}");
                }
                None => {
                    let _ = write!(out, "  {:>col_w$}", "-");
                }
            }
        }
        let avg = if avg_name == "Bias-SSC" { r.bias_ssc } else { r.bias_tpb };
        let _ = writeln!(out, "  {avg:>col_w$.2}  {:>col_w$.2}", r.macro_f1);
    }
    out
}

/// Pearson r with a two-sided p-value from Student's t with n−2 degrees of freedom.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(MetricsError::DegenerateInput(format!(
            "length mismatch {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 3 {
        return Err(MetricsError::DegenerateInput(format!("need at least 3 pairs, got {n}")));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateInput("zero variance".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let dof = (n - 2) as f64;
    let p = if (1.0 - r.abs()) < f64::EPSILON {
        0.0
    } else {
        let t = r * (dof / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).expect("dof > 0");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok((r, p))
}
