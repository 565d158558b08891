//! Run the five ablation presets with injected gold concepts, so every
//! difference between rows comes from the prompt alone.

use std::sync::Arc;

use xraycot::backend::MockBackend;
use xraycot::concepts::build_prototypes;
use xraycot::dataset::{generate_samples, GenConfig, SplitCounts};
use xraycot::encoder::RegionStatsEncoder;
use xraycot::eval::{ablation_sweep, render_table, RunOptions};
use xraycot::pipeline::{Pipeline, Recognizer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let test = generate_samples(&GenConfig::new(SplitCounts { train: 0, calib: 0, test: 120 }, 7))?;
    let enc = RegionStatsEncoder::new();
    let protos = build_prototypes(&enc, 4, 1, 64, 64)?;
    let base = Pipeline::new(Arc::new(enc), Recognizer::Oracle, protos, 1, 32, Arc::new(MockBackend::default()));
    let rows = ablation_sweep(&test, &base, &RunOptions::default())?;
    let table: Vec<_> = rows.iter().map(|r| (r.name.as_str(), &r.run.metrics)).collect();
    print!("{}", render_table(&table));
    Ok(())
}
