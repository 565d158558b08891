//! Encode one planted image with both encoders.

use xraycot::dataset::{plant_concepts, ConceptId, ConceptSet};
use xraycot::encoder::{init_vit_weights, Encoder, RegionStatsEncoder, ToyVitEncoder, VitOptions};

fn main() -> xraycot::Result<()> {
    let concepts = ConceptSet::EMPTY.with(ConceptId::EnlargedCardiacSilhouette);
    let image = plant_concepts(64, 64, concepts, 1, 0.0)?;

    let region = RegionStatsEncoder::new();
    let emb = region.encode(&image)?;
    // The heart footprint sits in the lower middle of the grid.
    let means: Vec<f64> = emb.values.iter().step_by(2).copied().collect();
    println!("{} ({} dims)", region.tag(), emb.dim());
    for row in means.chunks(8) {
        println!("  {}", row.iter().map(|m| format!("{m:6.1}")).collect::<String>());
    }

    let vit = ToyVitEncoder::new(init_vit_weights(7));
    let trace = vit.forward(&image, VitOptions::default())?;
    let row_sum: f64 = trace.attention[0][0].row(0).sum();
    println!("{} ({} dims), first attention row sums to {row_sum:.12}", vit.tag(), vit.dim());
    Ok(())
}
