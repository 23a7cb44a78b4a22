//! Counterfactual augmentation of training examples.
//!
//! Non-causal candidates reword the sentence's sentiment expressions and the
//! way the target is named while keeping the stance. Causal candidates edit
//! the sentence just enough to reverse its stance toward the same target.
//! Neutral parents have no reversed stance and only get a non-causal
//! candidate.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{StanceExample, StanceLabel};
use crate::llm_gateway::{Decoding, Gateway, GatewayError, LlmRequest};
use crate::prompting::{fill_template, template, PromptKind, PromptValues, PromptVariant};

#[derive(Debug, Error)]
pub enum CounterfactualError {
    #[error("stance {0} has no reverse")]
    NotReversible(StanceLabel),
    #[error("could not parse a generation for parent {0}")]
    GenerationUnparseable(String),
    #[error("counterfactual for {0} is not pending")]
    NotPending(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] crate::prompting::PromptError),
}

pub type Result<T> = std::result::Result<T, CounterfactualError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CadKind {
    NonCausal,
    Causal,
}

impl fmt::Display for CadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CadKind::NonCausal => "non_causal",
            CadKind::Causal => "causal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CadStatus {
    Pending,
    Valid,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualExample {
    pub parent_id: String,
    pub kind: CadKind,
    pub text: String,
    pub target: String,
    pub label: StanceLabel,
    pub status: CadStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<String>,
}

impl CounterfactualExample {
    /// The augmented sample as an example, inheriting the parent's metadata.
    /// Sentiment is dropped because non-causal rewrites change it.
    pub fn as_example(&self, parent: &StanceExample) -> StanceExample {
        StanceExample {
            id: format!("{}#{}", self.parent_id, self.kind),
            text: self.text.clone(),
            target: self.target.clone(),
            gold_stance: self.label,
            sentiment: None,
            dataset: parent.dataset,
            split: parent.split,
        }
    }

    pub fn to_jsonl_row(&self) -> String {
        serde_json::json!({
            "parent_id": self.parent_id,
            "kind": self.kind,
            "text": self.text,
            "target": self.target,
            "label": self.label,
            "status": self.status,
        })
        .to_string()
    }
}

pub fn reverse(label: StanceLabel) -> Result<StanceLabel> {
    match label {
        StanceLabel::Favor => Ok(StanceLabel::Against),
        StanceLabel::Against => Ok(StanceLabel::Favor),
        StanceLabel::Neutral => Err(CounterfactualError::NotReversible(label)),
    }
}

#[derive(Debug, Deserialize)]
struct Generation {
    text: Option<String>,
    target: Option<String>,
}

/// First JSON object with a `text` key; fields trimmed.
fn parse_generation(raw: &str) -> Option<(String, Option<String>)> {
    for (start, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Generation>();
        if let Some(Ok(g)) = stream.next() {
            if let Some(text) = g.text {
                let target = g.target.map(|t| t.trim().to_string()).filter(|t| !t.is_empty());
                return Some((text.trim().to_string(), target));
            }
        }
    }
    None
}

fn cad_prompt(kind: PromptKind, parent: &StanceExample, salt: u32) -> Result<String> {
    let values = PromptValues {
        sentence: Some(&parent.text),
        target: Some(&parent.target),
        stance: Some(parent.gold_stance.as_str()),
        examples: None,
    };
    let mut prompt = fill_template(template(kind, PromptVariant::default()), &values)?;
    if salt > 0 {
        prompt.push_str(&format!("(Attempt {}.)\n", salt + 1));
    }
    Ok(prompt)
}

pub fn non_causal_request(parent: &StanceExample, decoding: &Decoding, salt: u32) -> Result<LlmRequest> {
    Ok(decoding.request(cad_prompt(PromptKind::CadNonCausal, parent, salt)?))
}

pub fn causal_request(parent: &StanceExample, decoding: &Decoding, salt: u32) -> Result<LlmRequest> {
    Ok(decoding.request(cad_prompt(PromptKind::CadCausal, parent, salt)?))
}

/// Builds the non-causal candidate from a raw generation.
pub fn non_causal_from_response(parent: &StanceExample, raw: &str) -> Result<CounterfactualExample> {
    let (text, target) =
        parse_generation(raw).ok_or_else(|| CounterfactualError::GenerationUnparseable(parent.id.clone()))?;
    if text.is_empty() {
        return Err(CounterfactualError::GenerationUnparseable(parent.id.clone()));
    }
    Ok(CounterfactualExample {
        parent_id: parent.id.clone(),
        kind: CadKind::NonCausal,
        text,
        target: target.unwrap_or_default(),
        label: parent.gold_stance,
        status: CadStatus::Pending,
        reject_reason: None,
    })
}

/// Builds the causal candidate from a raw generation; the target is always the parent's.
pub fn causal_from_response(parent: &StanceExample, raw: &str) -> Result<CounterfactualExample> {
    let label = reverse(parent.gold_stance)?;
    let (text, _) =
        parse_generation(raw).ok_or_else(|| CounterfactualError::GenerationUnparseable(parent.id.clone()))?;
    if text.is_empty() {
        return Err(CounterfactualError::GenerationUnparseable(parent.id.clone()));
    }
    Ok(CounterfactualExample {
        parent_id: parent.id.clone(),
        kind: CadKind::Causal,
        text,
        target: parent.target.clone(),
        label,
        status: CadStatus::Pending,
        reject_reason: None,
    })
}

pub fn gen_non_causal(parent: &StanceExample, gateway: &Gateway, decoding: &Decoding) -> Result<CounterfactualExample> {
    let resp = gateway.complete(&non_causal_request(parent, decoding, 0)?)?;
    non_causal_from_response(parent, &resp.raw_text)
}

/// `Ok(None)` for neutral parents.
pub fn gen_causal(
    parent: &StanceExample,
    gateway: &Gateway,
    decoding: &Decoding,
) -> Result<Option<CounterfactualExample>> {
    if parent.gold_stance == StanceLabel::Neutral {
        return Ok(None);
    }
    let resp = gateway.complete(&causal_request(parent, decoding, 0)?)?;
    causal_from_response(parent, &resp.raw_text).map(Some)
}

fn template_echo() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(favor|against|neutral|none)\s*:").expect("valid regex"))
}

/// Automated quality gate: changed and non-empty text, length within
/// [0.3×, 3×] of the parent in characters, a non-empty target for
/// non-causal rewrites, and no echoed `label:` template fragments.
pub fn validate_counterfactual(
    mut c: CounterfactualExample,
    parent: &StanceExample,
) -> Result<CounterfactualExample> {
    if c.status != CadStatus::Pending {
        return Err(CounterfactualError::NotPending(c.parent_id));
    }
    let reason = if c.text.trim().is_empty() {
        Some("empty")
    } else if c.text.trim() == parent.text.trim() {
        Some("unchanged")
    } else {
        let len = c.text.chars().count() as f64;
        let parent_len = parent.text.chars().count() as f64;
        if len < 0.3 * parent_len || len > 3.0 * parent_len {
            Some("length")
        } else if c.kind == CadKind::NonCausal && c.target.trim().is_empty() {
            Some("empty target")
        } else if template_echo().is_match(&c.text) {
            Some("template echo")
        } else {
            None
        }
    };
    match reason {
        Some(r) => {
            c.status = CadStatus::Rejected;
            c.reject_reason = Some(r.to_string());
        }
        None => c.status = CadStatus::Valid,
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentConfig {
    pub non_causal: bool,
    pub causal: bool,
    /// Regeneration attempts (with a salted prompt) after a rejection.
    pub retries: u32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            non_causal: true,
            causal: true,
            retries: 0,
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct AugmentStats {
    pub requested: usize,
    pub valid: usize,
    pub rejected: usize,
    pub unparseable: usize,
    pub skipped_neutral: usize,
}

/// Generates and validates candidates for every parent. Only VALID
/// candidates are returned, ordered by parent then kind.
pub fn augment(
    parents: &[StanceExample],
    gateway: &Gateway,
    decoding: &Decoding,
    config: AugmentConfig,
) -> Result<(Vec<CounterfactualExample>, AugmentStats)> {
    let mut stats = AugmentStats::default();
    let mut jobs: Vec<(usize, CadKind)> = Vec::new();
    for (i, p) in parents.iter().enumerate() {
        if config.non_causal {
            jobs.push((i, CadKind::NonCausal));
        }
        if config.causal {
            if p.gold_stance == StanceLabel::Neutral {
                stats.skipped_neutral += 1;
            } else {
                jobs.push((i, CadKind::Causal));
            }
        }
    }
    stats.requested = jobs.len();

    let mut results: Vec<Option<CounterfactualExample>> = vec![None; jobs.len()];
    let mut pending: Vec<usize> = (0..jobs.len()).collect();
    for attempt in 0..=config.retries {
        if pending.is_empty() {
            break;
        }
        let requests = pending
            .iter()
            .map(|&j| {
                let (i, kind) = jobs[j];
                match kind {
                    CadKind::NonCausal => non_causal_request(&parents[i], decoding, attempt),
                    CadKind::Causal => causal_request(&parents[i], decoding, attempt),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let responses = gateway.complete_all(&requests);
        let mut still = Vec::new();
        for (&j, resp) in pending.iter().zip(responses) {
            let (i, kind) = jobs[j];
            let parent = &parents[i];
            let raw = resp?.raw_text;
            let candidate = match kind {
                CadKind::NonCausal => non_causal_from_response(parent, &raw),
                CadKind::Causal => causal_from_response(parent, &raw),
            };
            match candidate {
                Ok(c) => {
                    let c = validate_counterfactual(c, parent)?;
                    if c.status == CadStatus::Valid {
                        results[j] = Some(c);
                    } else {
                        log::debug!("rejected {} {}: {:?}", c.parent_id, c.kind, c.reject_reason);
                        still.push(j);
                    }
                }
                Err(CounterfactualError::GenerationUnparseable(_)) => still.push(j),
                Err(e) => return Err(e),
            }
        }
        pending = still;
    }
    for &j in &pending {
        let (i, kind) = jobs[j];
        log::debug!("dropping {} candidate for {}", kind, parents[i].id);
    }
    let out: Vec<CounterfactualExample> = results.into_iter().flatten().collect();
    stats.valid = out.len();
    stats.rejected = pending.len();
    Ok((out, stats))
}
