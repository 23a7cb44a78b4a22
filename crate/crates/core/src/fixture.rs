//! Synthetic-bias corpus and a scripted LLM with injected bias.
//!
//! Sentences are assembled from a small lexicon, so the true stance and
//! sentiment of any generated sentence (including rewrites) can be read back
//! with [`analyze`]. The mock LLM knows the truth and then applies two biases:
//! on the preferred target it answers favor with probability
//! `favor_target_rate`; otherwise a favor item with negative sentiment is
//! answered against with probability `sentiment_flip_rate`. Both draws are
//! keyed on the sentence and target, so every prompt layout sees the same
//! biased decision.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::bias_metrics::{PredictionEntry, PredictionLog};
use crate::corpus::{DatasetKind, Sentiment, Split, StanceExample, StanceLabel};
use crate::llm_gateway::ScriptedProvider;
use crate::prompting::{format_json_answer, template, PromptKind, PromptVariant};

pub const FIXTURE_TARGETS: [&str; 3] = ["Hillary Clinton", "Feminist Movement", "Donald Trump"];

const ALIASES: [&[&str]; 3] = [
    &["Hillary Clinton", "Hillary", "HRC", "Mrs Clinton"],
    &["the feminist movement", "feminism", "feminists", "women's liberation"],
    &["Donald Trump", "Trump", "the Donald", "DJT"],
];

const POSITIVE: [&str; 6] = [
    "What a wonderful day,",
    "Feeling hopeful today,",
    "So glad to see this,",
    "Happy to say",
    "Great news everyone,",
    "Loving this moment,",
];
const NEUTRAL_S: [&str; 4] = ["Just a note,", "For the record,", "In today's news,", "Reading the paper,"];
const NEGATIVE: [&str; 6] = [
    "Ugh, what a mess,",
    "This is infuriating,",
    "Sick of all this,",
    "What a disaster,",
    "So tired of this,",
    "Awful week,",
];

const FAVOR_CUES: [&str; 8] = [
    "I stand with {a}",
    "{a} has my vote",
    "proud to back {a}",
    "{a} is exactly what we need",
    "count me in for {a}",
    "{a} deserves our thanks",
    "go {a}",
    "{a} gets it right",
];
const AGAINST_CUES: [&str; 8] = [
    "I will never back {a}",
    "{a} must be stopped",
    "say no to {a}",
    "{a} is wrong for us",
    "{a} has to go",
    "done with {a}",
    "{a} cannot be trusted",
    "reject {a} now",
];
const NEUTRAL_CUES: [&str; 8] = [
    "{a} is speaking tonight",
    "anyone watching {a} later",
    "{a} was on the news",
    "heard {a} mentioned at lunch",
    "{a} scheduled a visit",
    "{a} released a statement",
    "there is a panel about {a}",
    "{a} is trending again",
];

const TAG_HEADS: [&str; 15] = [
    "velo", "mira", "kest", "dunor", "shai", "brel", "tamo", "quin", "lusk", "orva", "pemi", "zand", "gorth", "hyle",
    "wendi",
];
const TAG_TAILS: [&str; 15] = [
    "mir", "vax", "lune", "thar", "opa", "rik", "sel", "dova", "nux", "bery", "cal", "ethe", "fong", "ism", "jora",
];
/// Hashtags per stance.
pub const TAGS_PER_STANCE: usize = 60;

fn sentiment_phrases(s: Sentiment) -> &'static [&'static str] {
    match s {
        Sentiment::Positive => &POSITIVE,
        Sentiment::Neutral => &NEUTRAL_S,
        Sentiment::Negative => &NEGATIVE,
    }
}

fn cue_templates(l: StanceLabel) -> &'static [&'static str] {
    match l {
        StanceLabel::Favor => &FAVOR_CUES,
        StanceLabel::Against => &AGAINST_CUES,
        StanceLabel::Neutral => &NEUTRAL_CUES,
    }
}

fn stance_index(l: StanceLabel) -> usize {
    match l {
        StanceLabel::Favor => 0,
        StanceLabel::Against => 1,
        StanceLabel::Neutral => 2,
    }
}

/// Stance-bearing hashtags, disjoint across stances.
pub fn hashtags(label: StanceLabel) -> &'static [String] {
    static TAGS: OnceLock<Vec<Vec<String>>> = OnceLock::new();
    let all = TAGS.get_or_init(|| {
        let mut pool: Vec<String> = TAG_HEADS
            .iter()
            .flat_map(|h| TAG_TAILS.iter().map(move |t| format!("#{h}{t}")))
            .collect();
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(7));
        pool.chunks(TAGS_PER_STANCE).take(3).map(|c| c.to_vec()).collect()
    });
    &all[stance_index(label)]
}

/// The stance-bearing part of a fixture sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cue {
    /// An index into the stance's phrase templates.
    Phrase(usize),
    /// An index into the stance's hashtags.
    Tag(usize),
}

/// What a fixture sentence is made of.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Analysis {
    pub sentiment: Sentiment,
    pub sentiment_phrase: usize,
    pub stance: StanceLabel,
    pub cue: Cue,
    /// Index into [`FIXTURE_TARGETS`].
    pub target: usize,
    pub alias: usize,
}

impl Analysis {
    pub fn target_name(&self) -> &'static str {
        FIXTURE_TARGETS[self.target]
    }

    pub fn alias_text(&self) -> &'static str {
        ALIASES[self.target][self.alias]
    }

    /// Everything after the sentiment phrase.
    pub fn body(&self) -> String {
        let alias = self.alias_text();
        match self.cue {
            Cue::Phrase(i) => cue_templates(self.stance)[i].replace("{a}", alias),
            Cue::Tag(i) => format!("{alias} {}", hashtags(self.stance)[i]),
        }
    }

    pub fn render(&self) -> String {
        format!(
            "{} {}",
            sentiment_phrases(self.sentiment)[self.sentiment_phrase],
            self.body()
        )
    }
}

/// Canonical fixture target for a name or alias.
pub fn resolve_alias(name: &str) -> Option<usize> {
    let name = name.trim();
    ALIASES
        .iter()
        .position(|aliases| aliases.iter().any(|a| a.eq_ignore_ascii_case(name)))
        .or_else(|| FIXTURE_TARGETS.iter().position(|t| t.eq_ignore_ascii_case(name)))
}

/// Decomposes a fixture sentence; `None` for anything the lexicon did not produce.
pub fn analyze(text: &str) -> Option<Analysis> {
    let text = text.trim();
    for sentiment in Sentiment::ALL {
        for (si, phrase) in sentiment_phrases(sentiment).iter().enumerate() {
            let Some(rest) = text.strip_prefix(phrase).and_then(|r| r.strip_prefix(' ')) else {
                continue;
            };
            for stance in StanceLabel::ALL {
                for (target, aliases) in ALIASES.iter().enumerate() {
                    for (ai, alias) in aliases.iter().enumerate() {
                        let base = Analysis {
                            sentiment,
                            sentiment_phrase: si,
                            stance,
                            cue: Cue::Phrase(0),
                            target,
                            alias: ai,
                        };
                        if let Some(ci) = cue_templates(stance)
                            .iter()
                            .position(|c| c.replace("{a}", alias) == rest)
                        {
                            return Some(Analysis {
                                cue: Cue::Phrase(ci),
                                ..base
                            });
                        }
                        if let Some(tag) = rest.strip_prefix(alias).and_then(|r| r.strip_prefix(' ')) {
                            if let Some(ti) = hashtags(stance).iter().position(|t| t == tag) {
                                return Some(Analysis { cue: Cue::Tag(ti), ..base });
                            }
                        }
                    }
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Positive, neutral, negative.
    pub sentiment_weights: [f64; 3],
    /// Share of sentences whose stance is carried by a hashtag.
    pub hashtag_rate: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            n_train: 600,
            n_val: 100,
            n_test: 200,
            seed: 2024,
            sentiment_weights: [0.3, 0.1, 0.6],
            hashtag_rate: 0.4,
        }
    }
}

/// Stances and targets uniform, sentiment drawn from `sentiment_weights`.
pub fn synthetic_corpus(spec: &FixtureSpec) -> Vec<StanceExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sentiment_dist = WeightedIndex::new(spec.sentiment_weights).expect("valid weights");
    let mut out = Vec::with_capacity(spec.n_train + spec.n_val + spec.n_test);
    for (split, n) in [(Split::Train, spec.n_train), (Split::Val, spec.n_val), (Split::Test, spec.n_test)] {
        for i in 0..n {
            let stance = StanceLabel::ALL[rng.gen_range(0..3)];
            let target = rng.gen_range(0..FIXTURE_TARGETS.len());
            let sentiment = Sentiment::ALL[sentiment_dist.sample(&mut rng)];
            let cue = if rng.gen_bool(spec.hashtag_rate) {
                Cue::Tag(rng.gen_range(0..TAGS_PER_STANCE))
            } else {
                Cue::Phrase(rng.gen_range(0..cue_templates(stance).len()))
            };
            let a = Analysis {
                sentiment,
                sentiment_phrase: rng.gen_range(0..sentiment_phrases(sentiment).len()),
                stance,
                cue,
                target,
                alias: rng.gen_range(0..ALIASES[target].len()),
            };
            out.push(StanceExample {
                id: format!("syn-{}-{i:04}", split.as_str()),
                text: a.render(),
                target: FIXTURE_TARGETS[target].to_string(),
                gold_stance: stance,
                sentiment: Some(sentiment),
                dataset: DatasetKind::Sem16,
                split: Some(split),
            });
        }
    }
    out
}

/// Uniform draw in [0, 1) keyed on the given parts.
pub fn keyed_uniform(parts: &[&str]) -> f64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let bytes = h.finalize();
    let v = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    (v >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasProfile {
    pub preferred_target: String,
    pub favor_target_rate: f64,
    pub sentiment_flip_rate: f64,
    /// Ambiguous answers per prompt layout (1, 2, 3).
    pub ambiguity_rate: [f64; 3],
    /// Plain-text answers without a JSON block, per prompt layout.
    pub plain_rate: [f64; 3],
}

impl Default for BiasProfile {
    fn default() -> Self {
        BiasProfile {
            preferred_target: FIXTURE_TARGETS[0].to_string(),
            favor_target_rate: 0.3,
            sentiment_flip_rate: 0.4,
            ambiguity_rate: [0.0, 0.15, 0.3],
            plain_rate: [0.0, 0.1, 0.0],
        }
    }
}

/// The mock's stance decision for one (sentence, target) pair.
pub fn biased_prediction(
    profile: &BiasProfile,
    gold: StanceLabel,
    sentiment: Sentiment,
    target: &str,
    sentence: &str,
    rate_scale: (f64, f64),
) -> StanceLabel {
    let canonical = resolve_alias(target).map(|i| FIXTURE_TARGETS[i]).unwrap_or(target);
    if canonical == profile.preferred_target
        && keyed_uniform(&["target", sentence, target]) < profile.favor_target_rate * rate_scale.1
    {
        return StanceLabel::Favor;
    }
    if gold == StanceLabel::Favor
        && sentiment == Sentiment::Negative
        && keyed_uniform(&["flip", sentence, target]) < profile.sentiment_flip_rate * rate_scale.0
    {
        return StanceLabel::Against;
    }
    gold
}

fn tone(s: Sentiment) -> &'static str {
    match s {
        Sentiment::Positive => "upbeat",
        Sentiment::Neutral => "matter-of-fact",
        Sentiment::Negative => "bitter",
    }
}

fn rationale(a: &Analysis, target: &str, conclusion: StanceLabel) -> String {
    format!(
        "The sentence mentions {target} and says \"{}\". The tone is {}. So the attitude toward {target} is {}.",
        a.body(),
        tone(a.sentiment),
        conclusion
    )
}

fn last_line_value<'a>(prompt: &'a str, prefix: &str) -> Option<&'a str> {
    prompt.lines().rev().find_map(|l| l.strip_prefix(prefix)).map(str::trim)
}

fn quoted_target(prompt: &str) -> Option<&str> {
    let start = prompt.rfind("toward \"")? + "toward \"".len();
    let end = prompt[start..].find("\"?")?;
    Some(&prompt[start..start + end])
}

fn first_line(kind: PromptKind) -> &'static str {
    template(kind, PromptVariant::JsonQuestion).lines().next().unwrap_or("")
}

/// Scripted model over the fixture lexicon.
#[derive(Debug, Clone, Default)]
pub struct SyntheticLlm {
    pub profile: BiasProfile,
}

impl SyntheticLlm {
    pub fn new(profile: BiasProfile) -> Self {
        SyntheticLlm { profile }
    }

    /// A provider that answers every prompt through [`SyntheticLlm::respond`].
    pub fn provider(self) -> ScriptedProvider {
        ScriptedProvider::with_responder(move |req| Some(self.respond(&req.prompt)))
    }

    pub fn respond(&self, prompt: &str) -> String {
        let head = prompt.lines().next().unwrap_or("");
        if head == first_line(PromptKind::SentimentAnnotate) {
            return self.sentiment(prompt);
        }
        if head == first_line(PromptKind::CadNonCausal) {
            return self.rewrite(prompt, false);
        }
        if head == first_line(PromptKind::CadCausal) {
            return self.rewrite(prompt, true);
        }
        if head.starts_with("Stance detection is to determine") {
            return self.stance(prompt);
        }
        "I am not sure what you are asking.".to_string()
    }

    fn sentiment(&self, prompt: &str) -> String {
        let s = last_line_value(prompt, "Your sentence: ")
            .and_then(analyze)
            .map(|a| a.sentiment)
            .unwrap_or(Sentiment::Neutral);
        format!("```json {{ \"sentiment\": \"{}\" }}```", s.as_str())
    }

    fn stance(&self, prompt: &str) -> String {
        let variant = if prompt.contains("\nA.against\n") {
            PromptVariant::MultipleChoice
        } else if prompt.contains("\n[sentence]: ") {
            PromptVariant::BracketedFields
        } else {
            PromptVariant::JsonQuestion
        };
        let (sentence, target) = match variant {
            PromptVariant::JsonQuestion => (last_line_value(prompt, "Your sentence: "), quoted_target(prompt)),
            _ => (last_line_value(prompt, "[sentence]: "), last_line_value(prompt, "[target]: ")),
        };
        let (Some(sentence), Some(target)) = (sentence, target) else {
            return "The attitude is unclear.".to_string();
        };
        let Some(a) = analyze(sentence) else {
            let r = format!("The sentence does not clearly address {target}.");
            return format!("```json {}```", format_json_answer(StanceLabel::Neutral, &r, variant));
        };

        // rationale elicitation for demonstrations: explain the given label
        if let Some(pos) = prompt.find("The correct stance is \"") {
            let rest = &prompt[pos + "The correct stance is \"".len()..];
            let given = rest.split('"').next().and_then(StanceLabel::from_word).unwrap_or(a.stance);
            return format!("```json {}```", format_json_answer(given, &rationale(&a, target, given), variant));
        }

        let scale = if head_is(prompt, PromptKind::DebiasSsc) {
            (0.5, 1.0)
        } else if head_is(prompt, PromptKind::DebiasTpb) {
            (1.0, 0.5)
        } else {
            (1.0, 1.0)
        };
        let pred = biased_prediction(&self.profile, a.stance, a.sentiment, target, sentence, scale);
        let why = rationale(&a, target, pred);
        let slot = variant.number() as usize - 1;
        let u = keyed_uniform(&["format", prompt]);
        if u < self.profile.ambiguity_rate[slot] {
            let body = serde_json::json!({ "answer": why, "stance": "favor or against" });
            return format!("```json {body}```");
        }
        if u < self.profile.ambiguity_rate[slot] + self.profile.plain_rate[slot] {
            return why;
        }
        format!("```json {}```", format_json_answer(pred, &why, variant))
    }

    fn rewrite(&self, prompt: &str, causal: bool) -> String {
        let Some(sentence) = last_line_value(prompt, "Original sentence: ") else {
            return "Nothing to rewrite.".to_string();
        };
        let Some(mut a) = analyze(sentence) else {
            return format!("{{ \"text\": \"{}\", \"target\": \"\" }}", sentence.replace('"', "'"));
        };
        let pick = |tag: &str, n: usize| (keyed_uniform(&[tag, prompt]) * n as f64) as usize % n;
        if causal {
            let Ok(flipped) = crate::counterfactual::reverse(a.stance) else {
                return "A neutral sentence has no reversed stance.".to_string();
            };
            a.stance = flipped;
            a.cue = match a.cue {
                Cue::Phrase(_) => Cue::Phrase(pick("cue", cue_templates(flipped).len())),
                Cue::Tag(_) => Cue::Tag(pick("cue", TAGS_PER_STANCE)),
            };
        } else {
            let others: Vec<Sentiment> = Sentiment::ALL.into_iter().filter(|s| *s != a.sentiment).collect();
            a.sentiment = others[pick("sentiment", others.len())];
            a.sentiment_phrase = pick("phrase", sentiment_phrases(a.sentiment).len());
            let n = ALIASES[a.target].len();
            a.alias = (a.alias + 1 + pick("alias", n - 1)) % n;
        }
        let target = if causal { a.target_name() } else { a.alias_text() };
        format!(
            "```json {}```",
            serde_json::json!({ "text": a.render(), "target": target })
        )
    }
}

fn head_is(prompt: &str, kind: PromptKind) -> bool {
    prompt.lines().next() == Some(first_line(kind))
}

/// A responder that cycles through the three parse paths: well-formed JSON,
/// a bare keyword answer, and text with no usable label.
pub fn adversarial_response(index: usize, label: StanceLabel) -> String {
    match index % 3 {
        0 => format!(
            "```json {}```",
            format_json_answer(label, "Based on the wording.", PromptVariant::JsonQuestion)
        ),
        1 => format!("Thinking it over.\nFinal answer: {label}"),
        _ => "I cannot decide; the sentence could go either way.".to_string(),
    }
}

/// Builds a fixture log with a fixed recall per (sentiment, label) cell and
/// strongly unequal label counts across sentiments.
pub fn fixed_recall_profile_log() -> PredictionLog {
    // (sentiment, [(label, count, recall)])
    let cells: [(Sentiment, [(StanceLabel, usize, f64); 3]); 3] = [
        (
            Sentiment::Positive,
            [
                (StanceLabel::Favor, 3000, 0.90),
                (StanceLabel::Against, 600, 0.50),
                (StanceLabel::Neutral, 900, 0.70),
            ],
        ),
        (
            Sentiment::Neutral,
            [
                (StanceLabel::Favor, 500, 0.60),
                (StanceLabel::Against, 400, 0.60),
                (StanceLabel::Neutral, 2000, 0.85),
            ],
        ),
        (
            Sentiment::Negative,
            [
                (StanceLabel::Favor, 800, 0.45),
                (StanceLabel::Against, 4000, 0.92),
                (StanceLabel::Neutral, 1200, 0.70),
            ],
        ),
    ];
    let mut entries = Vec::new();
    for (sentiment, labels) in cells {
        for (gold, count, recall) in labels {
            let correct = (count as f64 * recall).round() as usize;
            let wrong: Vec<StanceLabel> = StanceLabel::ALL.into_iter().filter(|l| *l != gold).collect();
            for i in 0..count {
                // spread hits evenly so any large subsample keeps the recall
                let hit = (i * correct) / count != ((i + 1) * correct) / count;
                entries.push(PredictionEntry {
                    id: format!("{}-{}-{i}", sentiment.as_str(), gold.as_str()),
                    gold,
                    pred: if hit { gold } else { wrong[i % 2] },
                    sentiment: Some(sentiment),
                    target: FIXTURE_TARGETS[i % 3].to_string(),
                    dataset: DatasetKind::Sem16,
                });
            }
        }
    }
    PredictionLog::new(entries)
}

/// Within every sentiment subset, samples each label down to the subset's
/// smallest label count.
pub fn balanced_subsample(log: &PredictionLog, rng: &mut impl Rng) -> PredictionLog {
    let mut cells: HashMap<(Option<Sentiment>, StanceLabel), Vec<&PredictionEntry>> = HashMap::new();
    for e in &log.entries {
        cells.entry((e.sentiment, e.gold)).or_default().push(e);
    }
    let mut keys: Vec<_> = cells.keys().copied().collect();
    keys.sort_by_key(|(s, l)| (s.map(|s| s as u8), *l as u8));
    let mut entries = Vec::new();
    for s in keys.iter().map(|k| k.0).collect::<std::collections::BTreeSet<_>>() {
        let min = keys
            .iter()
            .filter(|k| k.0 == s)
            .map(|k| cells[k].len())
            .min()
            .unwrap_or(0);
        for k in keys.iter().filter(|k| k.0 == s) {
            entries.extend(cells[k].choose_multiple(rng, min).map(|e| (*e).clone()));
        }
    }
    PredictionLog::new(entries)
}
