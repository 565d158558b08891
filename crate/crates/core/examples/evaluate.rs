//! Train the MLC head and evaluate the full pipeline on a noisy test split.

use std::sync::Arc;

use xraycot::backend::MockBackend;
use xraycot::concepts::{build_prototypes, train_mlc, MlcHyper};
use xraycot::dataset::{generate_samples, GenConfig, Split, SplitCounts};
use xraycot::encoder::{Encoder, RegionStatsEncoder};
use xraycot::eval::{evaluate_run, render_table, RunOptions};
use xraycot::pipeline::{Pipeline, Recognizer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let samples = generate_samples(&GenConfig::new(SplitCounts { train: 300, calib: 0, test: 100 }, 42))?;
    let (train, test): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| s.split == Split::Train);
    let enc = RegionStatsEncoder::new();
    let feats = train.iter().map(|s| enc.encode(&s.image)).collect::<xraycot::Result<Vec<_>>>()?;
    let labels: Vec<_> = train.iter().map(|s| s.gold_concepts).collect();
    let (head, _) = train_mlc(&feats, &labels, &MlcHyper::default())?;

    let protos = build_prototypes(&enc, 8, 1, 64, 64)?;
    let pipeline = Pipeline::new(Arc::new(enc), Recognizer::Mlc(head), protos, 1, 32, Arc::new(MockBackend::default()));
    let run = evaluate_run(&test, &pipeline, &RunOptions { parallelism: 4, ..RunOptions::default() })?;
    print!("{}", render_table(&[("MLC-Concepts", &run.metrics)]));
    for row in &run.metrics.per_class {
        println!("{:<26} gold {:>3} predicted {:>3} recall {:?}", row.label.as_str(), row.gold, row.predicted, row.recall);
    }
    Ok(())
}
