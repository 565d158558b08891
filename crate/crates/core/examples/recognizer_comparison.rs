//! Zero-shot prototypes against the trained head on noise-free images.

use std::sync::Arc;

use xraycot::backend::MockBackend;
use xraycot::concepts::{build_prototypes, calibrate_thresholds, train_mlc, MlcHyper};
use xraycot::dataset::{generate_samples, GenConfig, Split, SplitCounts};
use xraycot::encoder::{Encoder, RegionStatsEncoder};
use xraycot::eval::{recognizer_comparison, render_table, RunOptions};
use xraycot::pipeline::{Pipeline, Recognizer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = GenConfig::new(SplitCounts { train: 300, calib: 100, test: 150 }, 42);
    cfg.noise_sigma = 0.0;
    let samples = generate_samples(&cfg)?;
    let split = |want| samples.iter().filter(|s| s.split == want).cloned().collect::<Vec<_>>();
    let (train, calib, test) = (split(Split::Train), split(Split::Calib), split(Split::Test));

    let enc = RegionStatsEncoder::new();
    let feats = train.iter().map(|s| enc.encode(&s.image)).collect::<xraycot::Result<Vec<_>>>()?;
    let labels: Vec<_> = train.iter().map(|s| s.gold_concepts).collect();
    let (head, _) = train_mlc(&feats, &labels, &MlcHyper::default())?;
    let (protos, _) = calibrate_thresholds(&build_prototypes(&enc, 16, 2, 64, 64)?, &calib, &enc)?;

    let base = Pipeline::new(Arc::new(enc), Recognizer::Oracle, protos.clone(), 1, 32, Arc::new(MockBackend::default()));
    let rows = recognizer_comparison(&test, &base, &head, &protos, &RunOptions::default())?;
    let table: Vec<_> = rows.iter().map(|r| (r.name.as_str(), &r.run.metrics)).collect();
    print!("{}", render_table(&table));
    Ok(())
}
