//! Prompt templates and response parsing.
//!
//! Templates are plain text files under `prompts/` with four placeholders:
//! `{sentence}`, `{target}`, `{stance}` and `{examples}`. Substitution is a
//! single left-to-right pass, so substituted text is never re-scanned and
//! braces elsewhere in a template (the JSON answer schema) are left alone.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DatasetKind, Sentiment, StanceExample, StanceLabel};
use crate::llm_gateway::{Decoding, Gateway, GatewayError};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template placeholder {{{0}}} has no value")]
    MissingPlaceholderValue(&'static str),
    #[error("unknown prompt kind {0:?}")]
    UnknownKind(String),
    #[error("demonstrations are only used by the cot_demo prompt")]
    UnexpectedDemos,
    #[error("need at least {needed} training examples for demonstrations, got {got}")]
    NotEnoughExamples { needed: usize, got: usize },
    #[error("example {0} already carries a sentiment label")]
    SentimentAlreadyPresent(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

pub type Result<T> = std::result::Result<T, PromptError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    TaskDes,
    CotDemo,
    DebiasSsc,
    DebiasTpb,
    SentimentAnnotate,
    CadNonCausal,
    CadCausal,
}

impl PromptKind {
    pub const ALL: [PromptKind; 7] = [
        PromptKind::TaskDes,
        PromptKind::CotDemo,
        PromptKind::DebiasSsc,
        PromptKind::DebiasTpb,
        PromptKind::SentimentAnnotate,
        PromptKind::CadNonCausal,
        PromptKind::CadCausal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::TaskDes => "task_des",
            PromptKind::CotDemo => "cot_demo",
            PromptKind::DebiasSsc => "debias_ssc",
            PromptKind::DebiasTpb => "debias_tpb",
            PromptKind::SentimentAnnotate => "sentiment_annotate",
            PromptKind::CadNonCausal => "cad_non_causal",
            PromptKind::CadCausal => "cad_causal",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        PromptKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| PromptError::UnknownKind(s.to_string()))
    }
}

/// Which of the three question layouts the CoT-Demo prompt uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum PromptVariant {
    JsonQuestion = 1,
    BracketedFields = 2,
    MultipleChoice = 3,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 3] = [
        PromptVariant::JsonQuestion,
        PromptVariant::BracketedFields,
        PromptVariant::MultipleChoice,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl Default for PromptVariant {
    fn default() -> Self {
        PromptVariant::JsonQuestion
    }
}

impl TryFrom<u8> for PromptVariant {
    type Error = String;

    fn try_from(n: u8) -> std::result::Result<Self, String> {
        match n {
            1 => Ok(PromptVariant::JsonQuestion),
            2 => Ok(PromptVariant::BracketedFields),
            3 => Ok(PromptVariant::MultipleChoice),
            _ => Err(format!("prompt variant must be 1, 2 or 3, got {n}")),
        }
    }
}

impl From<PromptVariant> for u8 {
    fn from(v: PromptVariant) -> u8 {
        v.number()
    }
}

impl FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.trim()
            .parse::<u8>()
            .map_err(|e| e.to_string())
            .and_then(PromptVariant::try_from)
    }
}

/// Raw template text. Only `CotDemo` has layout variants.
pub fn template(kind: PromptKind, variant: PromptVariant) -> &'static str {
    match (kind, variant) {
        (PromptKind::TaskDes, _) => include_str!("../prompts/task_des.txt"),
        (PromptKind::CotDemo, PromptVariant::JsonQuestion) => include_str!("../prompts/cot_demo.txt"),
        (PromptKind::CotDemo, PromptVariant::BracketedFields) => include_str!("../prompts/cot_demo_v2.txt"),
        (PromptKind::CotDemo, PromptVariant::MultipleChoice) => include_str!("../prompts/cot_demo_v3.txt"),
        (PromptKind::DebiasSsc, _) => include_str!("../prompts/debias_ssc.txt"),
        (PromptKind::DebiasTpb, _) => include_str!("../prompts/debias_tpb.txt"),
        (PromptKind::SentimentAnnotate, _) => include_str!("../prompts/sentiment_annotate.txt"),
        (PromptKind::CadNonCausal, _) => include_str!("../prompts/cad_non_causal.txt"),
        (PromptKind::CadCausal, _) => include_str!("../prompts/cad_causal.txt"),
    }
}

/// File name of the template under `prompts/`.
pub fn template_file(kind: PromptKind, variant: PromptVariant) -> String {
    match (kind, variant) {
        (PromptKind::CotDemo, v) if v != PromptVariant::JsonQuestion => {
            format!("cot_demo_v{}.txt", v.number())
        }
        _ => format!("{}.txt", kind.as_str()),
    }
}

#[derive(Debug, Default, Clone)]
pub struct PromptValues<'a> {
    pub sentence: Option<&'a str>,
    pub target: Option<&'a str>,
    pub stance: Option<&'a str>,
    pub examples: Option<&'a str>,
}

const PLACEHOLDERS: [&str; 4] = ["sentence", "target", "stance", "examples"];

/// Substitutes placeholders in one pass.
pub fn fill_template(template: &str, values: &PromptValues<'_>) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos + 1..];
        let hit = PLACEHOLDERS
            .iter()
            .find(|name| tail.starts_with(*name) && tail[name.len()..].starts_with('}'));
        match hit {
            Some(&name) => {
                let value = match name {
                    "sentence" => values.sentence,
                    "target" => values.target,
                    "stance" => values.stance,
                    _ => values.examples,
                };
                out.push_str(value.ok_or(PromptError::MissingPlaceholderValue(name))?);
                rest = &tail[name.len() + 1..];
            }
            None => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotDemo {
    pub text: String,
    pub target: String,
    pub stance: StanceLabel,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotDemoSet {
    pub demos: Vec<CotDemo>,
    pub source_seed: u64,
    pub dataset: DatasetKind,
}

pub const DEMO_COUNT: usize = 4;

/// Stance value as written in a given layout's answer schema.
fn stance_answer_value(label: StanceLabel, variant: PromptVariant) -> String {
    match variant {
        PromptVariant::MultipleChoice => match label {
            StanceLabel::Against => "A.against".into(),
            StanceLabel::Favor => "B.favor".into(),
            StanceLabel::Neutral => "C.neutral".into(),
        },
        _ => label.as_str().into(),
    }
}

/// The JSON answer object a well-behaved model returns.
pub fn format_json_answer(label: StanceLabel, rationale: &str, variant: PromptVariant) -> String {
    serde_json::json!({
        "answer": rationale,
        "stance": stance_answer_value(label, variant),
    })
    .to_string()
}

impl CotDemoSet {
    /// The `{examples}` block: one `Example N:` paragraph per demo.
    pub fn render_block(&self, variant: PromptVariant) -> String {
        self.demos
            .iter()
            .enumerate()
            .map(|(i, d)| {
                format!(
                    "Example {}:\nSentence: {}\nTarget: {}\nAnswer: ```json {}```\n",
                    i + 1,
                    d.text,
                    d.target,
                    format_json_answer(d.stance, &d.rationale, variant)
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn render_prompt(kind: PromptKind, example: &StanceExample, demos: Option<&CotDemoSet>) -> Result<String> {
    render_prompt_variant(kind, PromptVariant::default(), example, demos)
}

pub fn render_prompt_variant(
    kind: PromptKind,
    variant: PromptVariant,
    example: &StanceExample,
    demos: Option<&CotDemoSet>,
) -> Result<String> {
    if kind != PromptKind::CotDemo && demos.is_some() {
        return Err(PromptError::UnexpectedDemos);
    }
    let block = demos.map(|d| d.render_block(variant));
    let values = PromptValues {
        sentence: Some(&example.text),
        target: Some(&example.target),
        stance: Some(example.gold_stance.as_str()),
        examples: block.as_deref(),
    };
    fill_template(template(kind, variant), &values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsePath {
    JsonBlock,
    KeywordFallback,
    FailedDefault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedStance {
    pub stance: StanceLabel,
    pub rationale: String,
    pub parse_path: ParsePath,
}

/// One stance call: what was asked, what came back, and how it parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmJudgment {
    pub example_id: String,
    pub prompt_kind: PromptKind,
    pub prompt_variant: PromptVariant,
    pub raw_response: String,
    pub parsed: ParsedStance,
    pub model_id: String,
    pub cache_key: String,
    pub cached: bool,
}

/// Accepts `favor`, `B.favor`, `(b) favor` and similar option-letter forms.
fn stance_from_value(raw: &str) -> Option<StanceLabel> {
    let s = raw.trim();
    let bytes = s.as_bytes();
    let stripped = if bytes.len() > 2
        && bytes[0].is_ascii_alphabetic()
        && matches!(bytes[1], b'.' | b')' | b':')
    {
        &s[2..]
    } else if bytes.len() > 3 && bytes[0] == b'(' && bytes[2] == b')' {
        &s[3..]
    } else {
        s
    };
    StanceLabel::from_word(stripped)
}

/// First JSON object in `raw` for which `accept` returns true, with its byte span.
fn find_json_object<F>(raw: &str, mut accept: F) -> Option<(serde_json::Map<String, serde_json::Value>, usize, usize)>
where
    F: FnMut(&serde_json::Map<String, serde_json::Value>) -> bool,
{
    for (start, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<serde_json::Value>();
        if let Some(Ok(serde_json::Value::Object(map))) = stream.next() {
            if accept(&map) {
                let end = start + stream.byte_offset();
                return Some((map, start, end));
            }
        }
    }
    None
}

fn strip_fences(s: &str) -> String {
    s.replace("```json", "").replace("```", "").trim().to_string()
}

fn unique_label_hit(text: &str, label_set: &[StanceLabel]) -> Option<StanceLabel> {
    let mut hits: Vec<StanceLabel> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter_map(StanceLabel::from_word)
        .filter(|l| label_set.contains(l))
        .collect();
    hits.sort();
    hits.dedup();
    match hits.as_slice() {
        [one] => Some(*one),
        _ => None,
    }
}

/// Total parse of a stance response: JSON block, then keyword scan of the
/// final line and the whole text, then the fallback label.
pub fn parse_stance_response(raw: &str, label_set: &[StanceLabel], fallback: StanceLabel) -> ParsedStance {
    let block = find_json_object(raw, |m| m.contains_key("stance"));
    let rationale = match &block {
        Some((map, start, end)) => match map.get("answer").and_then(|v| v.as_str()) {
            Some(answer) => answer.trim().to_string(),
            None => strip_fences(&format!("{}{}", &raw[..*start], &raw[*end..])),
        },
        None => raw.trim().to_string(),
    };

    if let Some((map, _, _)) = &block {
        let label = map
            .get("stance")
            .and_then(|v| v.as_str())
            .and_then(stance_from_value)
            .filter(|l| label_set.contains(l));
        if let Some(stance) = label {
            return ParsedStance {
                stance,
                rationale,
                parse_path: ParsePath::JsonBlock,
            };
        }
    }

    let last_line = raw.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
    if let Some(stance) = unique_label_hit(last_line, label_set).or_else(|| unique_label_hit(raw, label_set)) {
        return ParsedStance {
            stance,
            rationale,
            parse_path: ParsePath::KeywordFallback,
        };
    }
    ParsedStance {
        stance: fallback,
        rationale,
        parse_path: ParsePath::FailedDefault,
    }
}

/// Prompt that asks the model to explain a known gold stance; used to build
/// the demonstrations' rationales.
pub fn rationale_elicitation_prompt(example: &StanceExample) -> Result<String> {
    let base = render_prompt(PromptKind::TaskDes, example, None)?;
    Ok(format!(
        "{base}The correct stance is \"{}\". Explain step by step why the sentence expresses this stance toward the target, and put the explanation in the \"answer\" field.\n",
        example.gold_stance.as_str()
    ))
}

/// Samples four training examples with `seed` and elicits one rationale for each.
pub fn build_cot_demos(
    train: &[StanceExample],
    seed: u64,
    gateway: &Gateway,
    decoding: &Decoding,
) -> Result<CotDemoSet> {
    if train.len() < DEMO_COUNT {
        return Err(PromptError::NotEnoughExamples {
            needed: DEMO_COUNT,
            got: train.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, train.len(), DEMO_COUNT).into_vec();
    let requests = picks
        .iter()
        .map(|&i| rationale_elicitation_prompt(&train[i]).map(|p| decoding.request(p)))
        .collect::<Result<Vec<_>>>()?;
    let responses = gateway.complete_all(&requests);
    let mut demos = Vec::with_capacity(DEMO_COUNT);
    for (&i, resp) in picks.iter().zip(responses) {
        let ex = &train[i];
        let resp = resp?;
        let parsed = parse_stance_response(&resp.raw_text, &StanceLabel::ALL, ex.gold_stance);
        let rationale = if parsed.rationale.is_empty() {
            resp.raw_text.trim().to_string()
        } else {
            parsed.rationale
        };
        demos.push(CotDemo {
            text: ex.text.clone(),
            target: ex.target.clone(),
            stance: ex.gold_stance,
            rationale,
        });
    }
    Ok(CotDemoSet {
        demos,
        source_seed: seed,
        dataset: train[0].dataset,
    })
}

/// Sentiment from a response: JSON `sentiment` key, else a unique keyword.
pub fn parse_sentiment_response(raw: &str) -> Option<Sentiment> {
    if let Some((map, _, _)) = find_json_object(raw, |m| m.contains_key("sentiment")) {
        if let Some(s) = map.get("sentiment").and_then(|v| v.as_str()).and_then(Sentiment::from_word) {
            return Some(s);
        }
    }
    let mut hits: Vec<Sentiment> = raw
        .split(|c: char| !c.is_alphanumeric())
        .filter_map(|w| match w.to_ascii_lowercase().as_str() {
            "positive" => Some(Sentiment::Positive),
            "negative" => Some(Sentiment::Negative),
            "neutral" => Some(Sentiment::Neutral),
            _ => None,
        })
        .collect();
    hits.sort();
    hits.dedup();
    match hits.as_slice() {
        [one] => Some(*one),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentimentAnnotation {
    pub sentiment: Sentiment,
    /// Set when the response could not be parsed and neutral was recorded.
    pub unparseable: bool,
}

/// Annotates an example lacking a sentiment label and stores the result on it.
pub fn annotate_sentiment(
    example: &mut StanceExample,
    gateway: &Gateway,
    decoding: &Decoding,
) -> Result<SentimentAnnotation> {
    if example.sentiment.is_some() {
        return Err(PromptError::SentimentAlreadyPresent(example.id.clone()));
    }
    let prompt = render_prompt(PromptKind::SentimentAnnotate, example, None)?;
    let resp = gateway.complete(&decoding.request(prompt))?;
    let annotation = match parse_sentiment_response(&resp.raw_text) {
        Some(sentiment) => SentimentAnnotation {
            sentiment,
            unparseable: false,
        },
        None => {
            log::warn!("unparseable sentiment response for {}; recording neutral", example.id);
            SentimentAnnotation {
                sentiment: Sentiment::Neutral,
                unparseable: true,
            }
        }
    };
    example.sentiment = Some(annotation.sentiment);
    Ok(annotation)
}
