//! Recall-deviation bias of a prediction log, broken down by sentiment and target.
//!
//! ```text
//! cargo run --example bias_metrics
//! ```

use stance_calib::bias_metrics::{bias_report, render_bias_table, PredictionEntry, PredictionLog};
use stance_calib::corpus::{DatasetKind, Sentiment, StanceLabel};

fn main() -> anyhow::Result<()> {
    use StanceLabel::*;
    // (gold, pred, sentiment, target)
    let rows = [
        (Favor, Favor, Sentiment::Positive, "Hillary Clinton"),
        (Favor, Against, Sentiment::Negative, "Hillary Clinton"),
        (Against, Favor, Sentiment::Negative, "Hillary Clinton"),
        (Neutral, Favor, Sentiment::Neutral, "Hillary Clinton"),
        (Favor, Favor, Sentiment::Positive, "Donald Trump"),
        (Favor, Against, Sentiment::Negative, "Donald Trump"),
        (Against, Against, Sentiment::Negative, "Donald Trump"),
        (Neutral, Neutral, Sentiment::Neutral, "Donald Trump"),
        (Against, Against, Sentiment::Positive, "Donald Trump"),
    ];
    let log = PredictionLog::new(
        rows.iter()
            .enumerate()
            .map(|(i, (gold, pred, s, t))| PredictionEntry {
                id: i.to_string(),
                gold: *gold,
                pred: *pred,
                sentiment: Some(*s),
                target: t.to_string(),
                dataset: DatasetKind::Sem16,
            })
            .collect(),
    );
    let report = bias_report(&log, DatasetKind::Sem16)?;
    println!("macro F1 {:.2}  Bias-SSC {:.2}  Bias-TPB {:.2}", report.macro_f1, report.bias_ssc, report.bias_tpb);
    let rows = vec![("toy".to_string(), report)];
    println!("{}", render_bias_table(&rows, "sentiment:"));
    println!("{}", render_bias_table(&rows, "target:"));
    Ok(())
}
