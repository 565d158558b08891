//! Build concept prototypes from clean exemplars, calibrate thresholds and
//! recognize concepts with no training.

use xraycot::concepts::{build_prototypes, calibrate_thresholds, zero_shot_recognize, Vocabulary};
use xraycot::dataset::{generate_samples, GenConfig, Split, SplitCounts};
use xraycot::encoder::{Encoder, RegionStatsEncoder};

fn main() -> xraycot::Result<()> {
    let mut cfg = GenConfig::new(SplitCounts { train: 0, calib: 80, test: 5 }, 9);
    cfg.noise_sigma = 0.0;
    let samples = generate_samples(&cfg)?;
    let (calib, test): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| s.split == Split::Calib);

    let enc = RegionStatsEncoder::new();
    let raw = build_prototypes(&enc, 16, 3, 64, 64)?;
    let (protos, report) = calibrate_thresholds(&raw, &calib, &enc)?;
    for w in &report.warnings {
        println!("warning: {w}");
    }
    let vocab = Vocabulary::default();
    for s in &test {
        let found = zero_shot_recognize(&enc.encode(&s.image)?, &protos, &vocab)?;
        let names: Vec<_> = found.iter().map(|f| format!("{} ({:.2})", f.concept, f.score)).collect();
        let gold: Vec<_> = s.gold_concepts.iter().map(|c| c.as_str()).collect();
        println!("{} gold {gold:?}\n    -> {}", s.sample_id, names.join(", "));
    }
    Ok(())
}
