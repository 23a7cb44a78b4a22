//! Run directories are named by the configuration digest, and a rerun of the
//! same configuration writes the same report bytes.
//!
//! ```text
//! cargo run --release --example reproducible_runs
//! ```

use std::sync::Arc;

use stance_calib::corpus::DatasetKind;
use stance_calib::experiments::{run_pipeline, ExperimentConfig};
use stance_calib::fixture::{synthetic_corpus, FixtureSpec, SyntheticLlm};
use stance_calib::llm_gateway::{Gateway, GatewayConfig};

fn main() -> anyhow::Result<()> {
    let data = synthetic_corpus(&FixtureSpec::default());
    let mut config = ExperimentConfig::new(DatasetKind::Sem16);
    config.seeds = vec![0, 1];
    println!("config digest {}", config.digest());
    let mut tweaked = config.clone();
    tweaked.train.learning_rate = 0.05;
    println!("with lr 0.05   {}", tweaked.digest());

    let mut bytes = Vec::new();
    for attempt in 0..2 {
        let dir = tempfile::tempdir()?;
        let gateway = Gateway::new(Arc::new(SyntheticLlm::default().provider()), dir.path().join("cache"), GatewayConfig::default())?;
        let report = run_pipeline(&config, &data, &gateway, Some(&dir.path().join("runs")))?;
        let run_dir = dir.path().join("runs").join(&report.config_digest);
        println!("run {attempt}: F1 {:.2} in {:.1}s", report.f1_mean, report.runtime_seconds);
        for entry in std::fs::read_dir(&run_dir)? {
            println!("  {}", entry?.file_name().to_string_lossy());
        }
        bytes.push(std::fs::read(run_dir.join("report.json"))?);
    }
    println!("report.json identical: {}", bytes[0] == bytes[1]);
    Ok(())
}
