//! Non-causal and causal counterfactuals for a handful of training sentences,
//! generated by the synthetic LLM and validated.
//!
//! ```text
//! cargo run --example counterfactuals
//! ```

use std::sync::Arc;

use stance_calib::counterfactual::{augment, AugmentConfig};
use stance_calib::fixture::{synthetic_corpus, FixtureSpec, SyntheticLlm};
use stance_calib::llm_gateway::{Decoding, Gateway, GatewayConfig, DEFAULT_CAD_MODEL};

fn main() -> anyhow::Result<()> {
    let cache = tempfile::tempdir()?;
    let gateway = Gateway::new(Arc::new(SyntheticLlm::default().provider()), cache.path(), GatewayConfig::default())?;
    let parents: Vec<_> = synthetic_corpus(&FixtureSpec::default()).into_iter().take(4).collect();
    let (cads, stats) = augment(&parents, &gateway, &Decoding::new(DEFAULT_CAD_MODEL), AugmentConfig::default())?;
    for p in &parents {
        println!("[{}] {} ({}, target {})", p.id, p.text, p.gold_stance, p.target);
        for c in cads.iter().filter(|c| c.parent_id == p.id) {
            println!("  {:?}: {} ({}, target {})", c.kind, c.text, c.label, c.target);
        }
    }
    println!("{stats:?}");
    Ok(())
}
