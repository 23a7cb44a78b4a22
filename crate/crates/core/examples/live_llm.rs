//! Judge one sentence with a real chat-completions endpoint. Needs
//! `STANCE_CALIB_API_KEY`; `STANCE_CALIB_BASE_URL` overrides the endpoint.
//!
//! ```text
//! STANCE_CALIB_API_KEY=... cargo run --example live_llm
//! ```

use std::sync::Arc;

use stance_calib::corpus::{DatasetKind, StanceExample, StanceLabel};
use stance_calib::experiments::run_inference;
use stance_calib::llm_gateway::{Decoding, Gateway, GatewayConfig, HttpProvider, API_KEY_ENV, DEFAULT_INFERENCE_MODEL};
use stance_calib::prompting::{PromptKind, PromptVariant};

fn main() -> anyhow::Result<()> {
    if std::env::var(API_KEY_ENV).is_err() {
        eprintln!("{API_KEY_ENV} is not set; nothing to do");
        return Ok(());
    }
    let base = std::env::var("STANCE_CALIB_BASE_URL").unwrap_or_else(|_| "https://api.openai.com/v1".to_string());
    let provider = HttpProvider::from_env(base);
    let gateway = Gateway::new(Arc::new(provider), ".stance-calib/cache", GatewayConfig::default())?;
    let example = StanceExample {
        id: "live".into(),
        text: "Women deserve equal pay, full stop.".into(),
        target: "Feminist Movement".into(),
        gold_stance: StanceLabel::Favor,
        sentiment: None,
        dataset: DatasetKind::Sem16,
        split: None,
    };
    let decoding = Decoding::new(DEFAULT_INFERENCE_MODEL);
    let (judgments, _) = run_inference(&[example], PromptKind::TaskDes, PromptVariant::JsonQuestion, None, &gateway, &decoding)?;
    let j = &judgments[0];
    println!("{} via {:?}: {}", j.parsed.stance, j.parsed.parse_path, j.parsed.rationale);
    Ok(())
}
