//! Fit the multi-label concept head on region statistics and score it on
//! held-out images.

use xraycot::concepts::{train_mlc, MlcHyper, Vocabulary};
use xraycot::dataset::{generate_samples, GenConfig, Split, SplitCounts};
use xraycot::encoder::{Encoder, RegionStatsEncoder};
use xraycot::eval::BinaryCounts;

fn main() -> xraycot::Result<()> {
    let samples = generate_samples(&GenConfig::new(SplitCounts { train: 300, calib: 0, test: 100 }, 5))?;
    let enc = RegionStatsEncoder::new();
    let (train, test): (Vec<_>, Vec<_>) = samples.iter().partition(|s| s.split == Split::Train);

    let feats = train.iter().map(|s| enc.encode(&s.image)).collect::<xraycot::Result<Vec<_>>>()?;
    let labels: Vec<_> = train.iter().map(|s| s.gold_concepts).collect();
    let (head, report) = train_mlc(&feats, &labels, &MlcHyper::default())?;
    println!("loss {:.4} -> {:.4}", report.initial_loss(), report.final_loss());

    let vocab = Vocabulary::default();
    let mut counts = [BinaryCounts::default(); 8];
    for s in &test {
        let found = head.predict(&enc.encode(&s.image)?, &vocab)?;
        for (k, c) in counts.iter_mut().enumerate() {
            let concept = head.concepts[k];
            c.record(found.iter().any(|f| f.concept == concept), s.gold_concepts.contains(concept));
        }
    }
    for (concept, c) in head.concepts.iter().zip(&counts) {
        println!("{:<28} bacc {:.3}", concept.as_str(), c.bacc().unwrap_or(f64::NAN));
    }
    Ok(())
}
