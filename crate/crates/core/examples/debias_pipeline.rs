//! The full pipeline on the synthetic-bias corpus: raw LLM judgments against
//! the calibrated system and its ablations.
//!
//! ```text
//! cargo run --release --example debias_pipeline
//! ```

use std::sync::Arc;

use stance_calib::bias_metrics::render_bias_table;
use stance_calib::corpus::DatasetKind;
use stance_calib::experiments::{render_f1_table, run_pipeline, ExperimentConfig, Variant};
use stance_calib::fixture::{synthetic_corpus, FixtureSpec, SyntheticLlm};
use stance_calib::llm_gateway::{Gateway, GatewayConfig};

fn main() -> anyhow::Result<()> {
    let cache = tempfile::tempdir()?;
    let gateway = Gateway::new(Arc::new(SyntheticLlm::default().provider()), cache.path(), GatewayConfig::default())?;
    let data = synthetic_corpus(&FixtureSpec::default());
    let base = ExperimentConfig::new(DatasetKind::Sem16);

    let mut reports = Vec::new();
    for v in Variant::ALL {
        let r = run_pipeline(&base.with_variant(v), &data, &gateway, None)?;
        reports.push((v.display_name().to_string(), r));
    }
    let rows: Vec<_> = reports.iter().map(|(n, r)| (n.clone(), r)).collect();
    println!("{}", render_f1_table(&rows));
    let bias: Vec<_> = reports.iter().map(|(n, r)| (n.clone(), r.bias.clone())).collect();
    println!("{}", render_bias_table(&bias, "sentiment:"));
    println!("{}", render_bias_table(&bias, "target:"));
    Ok(())
}
