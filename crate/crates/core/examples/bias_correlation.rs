//! How bias tracks accuracy across systems, and whether two systems differ
//! significantly over seeds.
//!
//! ```text
//! cargo run --release --example bias_correlation
//! ```

use std::sync::Arc;

use stance_calib::corpus::DatasetKind;
use stance_calib::experiments::{
    correlation_table, prompt_robustness, render_robustness, run_pipeline, significance, ExperimentConfig, Variant,
};
use stance_calib::fixture::{synthetic_corpus, FixtureSpec, SyntheticLlm};
use stance_calib::llm_gateway::{Gateway, GatewayConfig};
use stance_calib::prompting::PromptVariant;

fn main() -> anyhow::Result<()> {
    let cache = tempfile::tempdir()?;
    let gateway = Gateway::new(Arc::new(SyntheticLlm::default().provider()), cache.path(), GatewayConfig::default())?;
    let data = synthetic_corpus(&FixtureSpec::default());

    let mut reports = Vec::new();
    for pv in PromptVariant::ALL {
        let mut config = ExperimentConfig::new(DatasetKind::Sem16);
        config.prompt_variant = pv;
        for v in [Variant::Full, Variant::WoCad, Variant::WoCalibration] {
            reports.push(run_pipeline(&config.with_variant(v), &data, &gateway, None)?);
        }
    }
    println!("{}", correlation_table(&reports)?.render());
    println!("{}", render_robustness(&prompt_robustness(&reports)?));

    let full = &reports[0].f1_per_seed;
    let wo_cad = &reports[1].f1_per_seed;
    println!("FACTUAL vs w/o CAD over seeds: p = {:.4}", significance(full, wo_cad)?);
    Ok(())
}
