//! Render every prompt template for one sentence and parse a few typical answers.
//!
//! ```text
//! cargo run --example prompts
//! ```

use stance_calib::corpus::{DatasetKind, StanceExample, StanceLabel};
use stance_calib::prompting::{parse_stance_response, render_prompt, CotDemo, CotDemoSet, PromptKind};

fn main() -> anyhow::Result<()> {
    let example = StanceExample {
        id: "demo".into(),
        text: "Another debate, another round of dodging the question. #tired".into(),
        target: "Hillary Clinton".into(),
        gold_stance: StanceLabel::Against,
        sentiment: None,
        dataset: DatasetKind::Sem16,
        split: None,
    };
    let demos = CotDemoSet {
        demos: vec![CotDemo {
            text: "She has my vote in November.".into(),
            target: "Hillary Clinton".into(),
            stance: StanceLabel::Favor,
            rationale: "The author plans to vote for her.".into(),
        }],
        source_seed: 0,
        dataset: DatasetKind::Sem16,
    };
    for kind in PromptKind::ALL {
        let d = (kind == PromptKind::CotDemo).then_some(&demos);
        println!("===== {kind:?}\n{}\n", render_prompt(kind, &example, d)?);
    }

    for raw in [
        "```json {\"stance\": \"against\", \"rationale\": \"dodging questions is criticism\"}```",
        "I would say the stance is AGAINST.",
        "no idea",
    ] {
        let p = parse_stance_response(raw, DatasetKind::Sem16.label_set(), DatasetKind::Sem16.fallback_label());
        println!("{raw:?}\n  -> {} via {:?}", p.stance, p.parse_path);
    }
    Ok(())
}
