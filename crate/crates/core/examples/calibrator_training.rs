//! Train the hashed bag-of-words calibrator on LLM judgments of the synthetic
//! corpus, check one gradient numerically, and round-trip a checkpoint.
//!
//! ```text
//! cargo run --release --example calibrator_training
//! ```

use std::sync::Arc;

use stance_calib::calibration::{
    encode, load_checkpoint, loss_and_gradient, predict, save_checkpoint, train, CausalLossMode, Encoded, TrainConfig,
};
use stance_calib::corpus::DatasetKind;
use stance_calib::experiments::{prepare, training_records, ExperimentConfig};
use stance_calib::fixture::{synthetic_corpus, FixtureSpec, SyntheticLlm};
use stance_calib::llm_gateway::{Gateway, GatewayConfig};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let gateway = Gateway::new(Arc::new(SyntheticLlm::default().provider()), dir.path().join("cache"), GatewayConfig::default())?;
    let data = synthetic_corpus(&FixtureSpec::default());
    let config = ExperimentConfig::new(DatasetKind::Sem16);
    let prepared = prepare(&config, &data, &gateway)?;
    let (records, val) = training_records(&prepared)?;
    println!("{} training records ({} counterfactual), {} validation", records.len(), prepared.cads.len(), val.len());

    let train_config = TrainConfig::linear_bag(DatasetKind::Sem16);
    let outcome = train(&records, &val, &train_config, 0)?;
    for (epoch, (loss, f1)) in outcome.epoch_loss.iter().zip(&outcome.epoch_val_f1).enumerate() {
        println!("epoch {epoch:>2}  loss {loss:.4}  val F1 {f1:.2}");
    }
    println!("kept epoch {}", outcome.best_epoch);

    // central difference on one bias coordinate
    let model = &outcome.model;
    let enc: Vec<Encoded> = records.iter().take(64).map(|r| encode(model, r)).collect::<Result<_, _>>()?;
    let batch: Vec<&Encoded> = enc.iter().collect();
    let mode = CausalLossMode::FlippedLabelCe;
    let (_, grad) = loss_and_gradient(&model.linear, &batch, mode, true);
    let h = 1e-5;
    let (mut plus, mut minus) = (model.linear.clone(), model.linear.clone());
    plus.bias[0] += h;
    minus.bias[0] -= h;
    let numeric = (loss_and_gradient(&plus, &batch, mode, false).0.total - loss_and_gradient(&minus, &batch, mode, false).0.total) / (2.0 * h);
    println!("d loss / d bias[0]: analytic {:.8}  numeric {numeric:.8}", grad.unwrap().bias[0]);

    let ckpt = dir.path().join("checkpoint");
    save_checkpoint(&ckpt, model, &train_config)?;
    let (restored, _) = load_checkpoint(&ckpt)?;
    let (probs, label) = predict(&restored, &records[0].input_text);
    println!("restored model on first record: {label} {probs:.3?}");
    Ok(())
}
