//! Generate a small synthetic split and show what one sample carries.
//!
//! `cargo run --example generate_dataset [out_dir]`

use std::path::PathBuf;

use xraycot::dataset::{generate_dataset, GenConfig, SplitCounts};

fn main() -> xraycot::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("xraycot-example-dataset"));
    let config = GenConfig::new(SplitCounts { train: 8, calib: 4, test: 4 }, 42);
    let manifest = generate_dataset(&config, &out)?;
    println!("{} samples under {}", manifest.entries.len(), out.display());
    for e in manifest.entries.iter().take(4) {
        let concepts: Vec<_> = e.gold_concepts.iter().map(|c| c.as_str()).collect();
        println!("{:<12} {:<26} {:?}", e.sample_id, e.gold_disease.as_str(), concepts);
    }
    Ok(())
}
