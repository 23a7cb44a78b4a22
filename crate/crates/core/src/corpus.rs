//! Dataset ingestion, label canonicalization and split construction.
//!
//! All three benchmarks are stored in one canonical JSONL layout:
//!
//! ```text
//! {"id": str, "text": str, "target": str, "stance": str, "sentiment": str|null, "split": "train"|"val"|"test"}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("target {0:?} not found")]
    TargetNotFound(String),
    #[error("example {0:?} has no split tag")]
    MissingSplitTag(String),
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceLabel {
    Favor,
    Against,
    Neutral,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [StanceLabel::Favor, StanceLabel::Against, StanceLabel::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Favor => "favor",
            StanceLabel::Against => "against",
            StanceLabel::Neutral => "neutral",
        }
    }

    /// Maps a free-form label word onto a stance, ignoring case and
    /// surrounding punctuation. Does not check any dataset's label set.
    pub fn from_word(raw: &str) -> Option<StanceLabel> {
        let word = raw
            .trim()
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_ascii_lowercase();
        match word.as_str() {
            "favor" | "favour" | "pro" | "support" => Some(StanceLabel::Favor),
            "against" | "con" => Some(StanceLabel::Against),
            "none" | "neutral" => Some(StanceLabel::Neutral),
            _ => None,
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Neutral,
    Negative,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Positive, Sentiment::Neutral, Sentiment::Negative];

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Positive => "positive",
            Sentiment::Neutral => "neutral",
            Sentiment::Negative => "negative",
        }
    }

    /// Accepts the long names plus the SemEval-2016 raw codes (`pos`, `neg`, `other`).
    pub fn from_word(raw: &str) -> Option<Sentiment> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" => Some(Sentiment::Positive),
            "neutral" | "other" | "none" => Some(Sentiment::Neutral),
            "negative" | "neg" => Some(Sentiment::Negative),
            _ => None,
        }
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Sem16,
    Pstance,
    Vast,
}

impl DatasetKind {
    pub fn label_set(self) -> &'static [StanceLabel] {
        match self {
            DatasetKind::Pstance => &[StanceLabel::Favor, StanceLabel::Against],
            DatasetKind::Sem16 | DatasetKind::Vast => &StanceLabel::ALL,
        }
    }

    /// Number of stance labels.
    pub fn k(self) -> usize {
        self.label_set().len()
    }

    pub fn contains(self, label: StanceLabel) -> bool {
        self.label_set().contains(&label)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Sem16 => "sem16",
            DatasetKind::Pstance => "pstance",
            DatasetKind::Vast => "vast",
        }
    }

    /// Label used when a response cannot be parsed: neutral where the
    /// label set has it, otherwise the P-Stance majority class.
    pub fn fallback_label(self) -> StanceLabel {
        if self.contains(StanceLabel::Neutral) {
            StanceLabel::Neutral
        } else {
            StanceLabel::Against
        }
    }

    /// Expands the short target codes used in result tables.
    pub fn resolve_target(self, name: &str) -> String {
        let full = match (self, name) {
            (DatasetKind::Sem16, "HC") => "Hillary Clinton",
            (DatasetKind::Sem16, "FM") => "Feminist Movement",
            (DatasetKind::Sem16, "LA") => "Legalization of Abortion",
            (DatasetKind::Sem16, "A") => "Atheism",
            (DatasetKind::Sem16, "CC") => "Climate Change is a Real Concern",
            (DatasetKind::Sem16, "DT") => "Donald Trump",
            _ => name,
        };
        full.to_string()
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "sem16" | "semeval2016" => Ok(DatasetKind::Sem16),
            "pstance" => Ok(DatasetKind::Pstance),
            "vast" => Ok(DatasetKind::Vast),
            _ => Err(CorpusError::UnknownDataset(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "dev" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::MalformedRow {
                line: 0,
                reason: format!("unknown split {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceExample {
    pub id: String,
    pub text: String,
    pub target: String,
    pub gold_stance: StanceLabel,
    pub sentiment: Option<Sentiment>,
    pub dataset: DatasetKind,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    InTarget,
    ZeroShot,
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "in_target" => Ok(Protocol::InTarget),
            "zero_shot" => Ok(Protocol::ZeroShot),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::InTarget => "in_target",
            Protocol::ZeroShot => "zero_shot",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub protocol: Protocol,
    pub held_out_target: Option<String>,
    pub train_val_ratio: (u32, u32),
    pub seed: u64,
}

impl SplitSpec {
    pub fn in_target() -> Self {
        SplitSpec {
            protocol: Protocol::InTarget,
            held_out_target: None,
            train_val_ratio: (7, 1),
            seed: 0,
        }
    }

    pub fn zero_shot(held_out_target: impl Into<String>, seed: u64) -> Self {
        SplitSpec {
            protocol: Protocol::ZeroShot,
            held_out_target: Some(held_out_target.into()),
            train_val_ratio: (7, 1),
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Partition {
    pub train: Vec<StanceExample>,
    pub val: Vec<StanceExample>,
    pub test: Vec<StanceExample>,
}

/// Case-insensitive mapping of dataset-native label strings.
pub fn canonicalize_label(raw: &str, kind: DatasetKind) -> Result<StanceLabel> {
    let label = StanceLabel::from_word(raw).ok_or_else(|| CorpusError::UnknownLabel(raw.to_string()))?;
    if kind.contains(label) {
        Ok(label)
    } else {
        Err(CorpusError::UnknownLabel(raw.to_string()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRow {
    id: String,
    text: String,
    target: String,
    stance: String,
    #[serde(default)]
    sentiment: Option<String>,
    #[serde(default)]
    split: Option<String>,
}

fn parse_row(line_no: usize, line: &str, kind: DatasetKind) -> Result<StanceExample> {
    let malformed = |reason: String| CorpusError::MalformedRow { line: line_no, reason };
    let row: JsonRow = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    if row.text.trim().is_empty() {
        return Err(malformed("empty text".into()));
    }
    if row.target.trim().is_empty() {
        return Err(malformed("empty target".into()));
    }
    let gold_stance = canonicalize_label(&row.stance, kind)?;
    let sentiment = match row.sentiment.as_deref() {
        None => None,
        Some(s) => Some(Sentiment::from_word(s).ok_or_else(|| malformed(format!("unknown sentiment {s:?}")))?),
    };
    let split = match row.split.as_deref() {
        None => None,
        Some(s) => Some(s.parse::<Split>().map_err(|_| malformed(format!("unknown split {s:?}")))?),
    };
    Ok(StanceExample {
        id: row.id,
        text: row.text,
        target: row.target,
        gold_stance,
        sentiment,
        dataset: kind,
        split,
    })
}

/// Reads a canonical JSONL dataset file. Blank lines are skipped.
pub fn load_dataset(path: &Path, kind: DatasetKind) -> Result<Vec<StanceExample>> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_row(idx + 1, &line, kind)?);
    }
    Ok(out)
}

pub fn example_to_json(example: &StanceExample) -> serde_json::Value {
    serde_json::json!({
        "id": example.id,
        "text": example.text,
        "target": example.target,
        "stance": example.gold_stance.as_str(),
        "sentiment": example.sentiment.map(Sentiment::as_str),
        "split": example.split.map(Split::as_str),
    })
}

pub fn write_dataset(path: &Path, examples: &[StanceExample]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CorpusError::io(parent, e))?;
    }
    let mut buf = Vec::new();
    for ex in examples {
        serde_json::to_writer(&mut buf, &example_to_json(ex)).expect("json value serializes");
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| CorpusError::io(path, e))
}

/// Per-(target, stance) counts, the layout of the dataset statistics table.
pub fn count_table(examples: &[StanceExample]) -> BTreeMap<String, BTreeMap<StanceLabel, usize>> {
    let mut table: BTreeMap<String, BTreeMap<StanceLabel, usize>> = BTreeMap::new();
    for ex in examples {
        *table
            .entry(ex.target.clone())
            .or_default()
            .entry(ex.gold_stance)
            .or_insert(0) += 1;
    }
    table
}

/// Reference (favor, against, neutral) counts per target of the released datasets.
pub fn published_counts(kind: DatasetKind) -> Vec<(&'static str, [usize; 3])> {
    match kind {
        DatasetKind::Sem16 => vec![
            ("Hillary Clinton", [163, 565, 256]),
            ("Feminist Movement", [268, 511, 170]),
            ("Legalization of Abortion", [167, 544, 222]),
            ("Atheism", [124, 464, 145]),
            ("Climate Change is a Real Concern", [335, 26, 203]),
            ("Donald Trump", [148, 299, 260]),
        ],
        DatasetKind::Pstance => vec![
            ("Biden", [3217, 4079, 0]),
            ("Sanders", [3551, 2774, 0]),
            ("Trump", [3663, 4290, 0]),
        ],
        DatasetKind::Vast => vec![("*", [6952, 7297, 4296])],
    }
}

fn check_partition_ids(examples: &[StanceExample]) -> HashSet<&str> {
    examples.iter().map(|e| e.id.as_str()).collect()
}

/// Leave-one-target-out split. For VAST the published split tags are passed
/// through unchanged.
pub fn make_zero_shot_splits(examples: &[StanceExample], spec: &SplitSpec) -> Result<Partition> {
    if examples.first().map(|e| e.dataset) == Some(DatasetKind::Vast) {
        return make_in_target_splits(examples, spec);
    }
    let held_out = spec
        .held_out_target
        .as_deref()
        .ok_or_else(|| CorpusError::TargetNotFound(String::new()))?;
    let kind = examples.first().map(|e| e.dataset).unwrap_or(DatasetKind::Sem16);
    let held_out = kind.resolve_target(held_out);
    if !examples.iter().any(|e| e.target == held_out) {
        return Err(CorpusError::TargetNotFound(held_out));
    }

    let (test, mut rest): (Vec<_>, Vec<_>) = examples.iter().cloned().partition(|e| e.target == held_out);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rest.shuffle(&mut rng);

    let (num, den) = spec.train_val_ratio;
    let n_train = rest.len() * num as usize / (num + den) as usize;
    let val = rest.split_off(n_train);
    debug_assert_eq!(
        check_partition_ids(&rest).len() + check_partition_ids(&val).len() + check_partition_ids(&test).len(),
        examples.len()
    );
    Ok(Partition {
        train: rest,
        val,
        test,
    })
}

/// Partitions by the official split tag.
pub fn make_in_target_splits(examples: &[StanceExample], _spec: &SplitSpec) -> Result<Partition> {
    let mut part = Partition::default();
    for ex in examples {
        match ex.split {
            Some(Split::Train) => part.train.push(ex.clone()),
            Some(Split::Val) => part.val.push(ex.clone()),
            Some(Split::Test) => part.test.push(ex.clone()),
            None => return Err(CorpusError::MissingSplitTag(ex.id.clone())),
        }
    }
    if part.val.is_empty() {
        log::warn!("dataset has no validation rows; validation split is empty");
    }
    Ok(part)
}

pub fn make_splits(examples: &[StanceExample], spec: &SplitSpec) -> Result<Partition> {
    match spec.protocol {
        Protocol::InTarget => make_in_target_splits(examples, spec),
        Protocol::ZeroShot => make_zero_shot_splits(examples, spec),
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SplitManifest {
    pub protocol: Protocol,
    pub held_out_target: Option<String>,
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Writes `splits/<protocol>/<held_out>.json` under `root`.
pub fn write_split_manifest(root: &Path, spec: &SplitSpec, part: &Partition) -> Result<PathBuf> {
    let ids = |xs: &[StanceExample]| xs.iter().map(|e| e.id.clone()).collect::<Vec<_>>();
    let manifest = SplitManifest {
        protocol: spec.protocol,
        held_out_target: spec.held_out_target.clone(),
        seed: spec.seed,
        train: ids(&part.train),
        val: ids(&part.val),
        test: ids(&part.test),
    };
    let name = spec.held_out_target.as_deref().unwrap_or("all").replace(['/', ' '], "_");
    let dir = root.join("splits").join(spec.protocol.to_string());
    fs::create_dir_all(&dir).map_err(|e| CorpusError::io(&dir, e))?;
    let path = dir.join(format!("{name}.json"));
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| CorpusError::io(&path, e))?;
    Ok(path)
}

/// Column layout of a raw CSV/TSV distribution.
#[derive(Debug, Clone)]
pub struct RawFormat {
    pub text: &'static str,
    pub target: &'static str,
    pub stance: &'static str,
    pub sentiment: Option<&'static str>,
    pub id: Option<&'static str>,
}

impl RawFormat {
    pub fn for_kind(kind: DatasetKind) -> Self {
        match kind {
            DatasetKind::Sem16 => RawFormat {
                text: "Tweet",
                target: "Target",
                stance: "Stance",
                sentiment: Some("Sentiment"),
                id: Some("ID"),
            },
            DatasetKind::Pstance => RawFormat {
                text: "Tweet",
                target: "Target",
                stance: "Stance",
                sentiment: None,
                id: None,
            },
            DatasetKind::Vast => RawFormat {
                text: "post",
                target: "new_topic",
                stance: "label",
                sentiment: None,
                id: Some("new_id"),
            },
        }
    }
}

#[derive(Debug, Default, Serialize)]
pub struct IngestOutcome {
    pub examples: Vec<StanceExample>,
    /// Rows dropped because their text is unavailable (e.g. unrehydrated tweets).
    pub skipped: Vec<String>,
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
}

/// Converts one raw CSV (or TSV, by extension) file into canonical examples.
pub fn ingest_raw(path: &Path, kind: DatasetKind, split: Split, out: &mut IngestOutcome) -> Result<()> {
    let delimiter = if path.extension().and_then(|e| e.to_str()) == Some("tsv") {
        b'\t'
    } else {
        b','
    };
    let csv_err = |source| CorpusError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(file);
    let headers = reader.byte_headers().map_err(csv_err)?;
    let headers = csv::StringRecord::from_byte_record_lossy(headers.clone());
    let fmt = RawFormat::for_kind(kind);
    let col = |name: &str| {
        find_column(&headers, name).ok_or_else(|| CorpusError::MalformedRow {
            line: 1,
            reason: format!("missing column {name:?}"),
        })
    };
    let text_col = col(fmt.text)?;
    let target_col = col(fmt.target)?;
    let stance_col = col(fmt.stance)?;
    let sentiment_col = fmt.sentiment.and_then(|c| find_column(&headers, c));
    let id_col = fmt.id.and_then(|c| find_column(&headers, c));

    for (idx, record) in reader.byte_records().enumerate() {
        let line = idx + 2;
        let record = csv::StringRecord::from_byte_record_lossy(record.map_err(csv_err)?);
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let id = id_col
            .map(&field)
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("{}-{}-{}", kind, split.as_str(), idx));
        let text = field(text_col);
        if text.is_empty() || text.eq_ignore_ascii_case("not available") {
            out.skipped.push(id);
            continue;
        }
        let target = field(target_col);
        if target.is_empty() {
            return Err(CorpusError::MalformedRow {
                line,
                reason: "empty target".into(),
            });
        }
        let mut raw_label = field(stance_col);
        if kind == DatasetKind::Vast {
            // VAST ships numeric labels
            raw_label = match raw_label.as_str() {
                "0" => "con".into(),
                "1" => "pro".into(),
                "2" => "neutral".into(),
                _ => raw_label,
            };
        }
        let gold_stance = canonicalize_label(&raw_label, kind)?;
        let sentiment = sentiment_col.and_then(|i| Sentiment::from_word(&field(i)));
        out.examples.push(StanceExample {
            id,
            text,
            target,
            gold_stance,
            sentiment,
            dataset: kind,
            split: Some(split),
        });
    }
    Ok(())
}

/// Renders the per-target count table as aligned text.
pub fn render_count_table(kind: DatasetKind, examples: &[StanceExample]) -> String {
    let table = count_table(examples);
    let labels = kind.label_set();
    let width = table.keys().map(|t| t.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "Target");
    for l in labels {
        let _ = write!(out, " {:>8}", l.as_str());
    }
    out.push('\n');
    for (target, counts) in &table {
        let _ = write!(out, "{target:<width$}");
        for l in labels {
            let _ = write!(out, " {:>8}", counts.get(l).copied().unwrap_or(0));
        }
        out.push('\n');
    }
    out
}

/// Distinct targets in first-seen order.
pub fn targets(examples: &[StanceExample]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for ex in examples {
        if seen.insert(ex.target.as_str()) {
            out.push(ex.target.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: &str, target: &str, stance: StanceLabel, split: Option<Split>) -> StanceExample {
        StanceExample {
            id: id.into(),
            text: format!("text {id}"),
            target: target.into(),
            gold_stance: stance,
            sentiment: Some(Sentiment::Neutral),
            dataset: DatasetKind::Sem16,
            split,
        }
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(canonicalize_label("FAVOR", DatasetKind::Sem16).unwrap(), StanceLabel::Favor);
        assert_eq!(canonicalize_label("pro", DatasetKind::Vast).unwrap(), StanceLabel::Favor);
        assert_eq!(canonicalize_label("Con", DatasetKind::Vast).unwrap(), StanceLabel::Against);
        assert_eq!(canonicalize_label("NONE", DatasetKind::Sem16).unwrap(), StanceLabel::Neutral);
        assert!(matches!(
            canonicalize_label("none", DatasetKind::Pstance),
            Err(CorpusError::UnknownLabel(s)) if s == "none"
        ));
        assert!(canonicalize_label("maybe", DatasetKind::Sem16).is_err());
    }

    #[test]
    fn label_sets() {
        assert_eq!(DatasetKind::Sem16.k(), 3);
        assert_eq!(DatasetKind::Pstance.k(), 2);
        assert_eq!(DatasetKind::Vast.k(), 3);
        assert!(!DatasetKind::Pstance.contains(StanceLabel::Neutral));
    }

    #[test]
    fn zero_shot_exact_ratio() {
        let mut xs: Vec<_> = (0..8)
            .map(|i| ex(&format!("a{i}"), "A", StanceLabel::Favor, None))
            .collect();
        xs.push(ex("b0", "B", StanceLabel::Against, None));
        let part = make_zero_shot_splits(&xs, &SplitSpec::zero_shot("B", 3)).unwrap();
        assert_eq!(part.train.len(), 7);
        assert_eq!(part.val.len(), 1);
        assert_eq!(part.test.len(), 1);
        let again = make_zero_shot_splits(&xs, &SplitSpec::zero_shot("B", 3)).unwrap();
        assert_eq!(part, again);
    }

    #[test]
    fn zero_shot_unknown_target() {
        let xs = vec![ex("a", "A", StanceLabel::Favor, None)];
        assert!(matches!(
            make_zero_shot_splits(&xs, &SplitSpec::zero_shot("Z", 0)),
            Err(CorpusError::TargetNotFound(_))
        ));
    }

    #[test]
    fn zero_shot_resolves_abbreviation() {
        let xs = vec![
            ex("a", "Atheism", StanceLabel::Favor, None),
            ex("d", "Donald Trump", StanceLabel::Against, None),
        ];
        let part = make_zero_shot_splits(&xs, &SplitSpec::zero_shot("DT", 0)).unwrap();
        assert_eq!(part.test.len(), 1);
        assert_eq!(part.test[0].id, "d");
    }

    #[test]
    fn in_target_partition() {
        let xs = vec![
            ex("1", "A", StanceLabel::Favor, Some(Split::Train)),
            ex("2", "A", StanceLabel::Favor, Some(Split::Test)),
            ex("3", "A", StanceLabel::Favor, Some(Split::Val)),
            ex("4", "A", StanceLabel::Favor, Some(Split::Train)),
        ];
        let part = make_in_target_splits(&xs, &SplitSpec::in_target()).unwrap();
        assert_eq!(part.train.len(), 2);
        assert_eq!(part.val.len(), 1);
        assert_eq!(part.test.len(), 1);
        assert_eq!(part.test[0].id, "2");

        let no_val = vec![ex("1", "A", StanceLabel::Favor, Some(Split::Train))];
        let part = make_in_target_splits(&no_val, &SplitSpec::in_target()).unwrap();
        assert!(part.val.is_empty());

        let untagged = vec![ex("1", "A", StanceLabel::Favor, None)];
        assert!(matches!(
            make_in_target_splits(&untagged, &SplitSpec::in_target()),
            Err(CorpusError::MissingSplitTag(_))
        ));
    }

    #[test]
    fn dataset_kind_parse() {
        assert_eq!("Sem16".parse::<DatasetKind>().unwrap(), DatasetKind::Sem16);
        assert_eq!("p-stance".parse::<DatasetKind>().unwrap(), DatasetKind::Pstance);
        assert!("imdb".parse::<DatasetKind>().is_err());
    }
}
