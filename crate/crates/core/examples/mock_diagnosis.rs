//! Diagnose one planted image end to end with the rule-based mock backend.

use std::sync::Arc;

use xraycot::backend::MockBackend;
use xraycot::concepts::build_prototypes;
use xraycot::dataset::{plant_concepts, ConceptId, ConceptSet};
use xraycot::encoder::RegionStatsEncoder;
use xraycot::pipeline::{Pipeline, Recognizer};
use xraycot::report::{serialize, Format};

fn main() -> xraycot::Result<()> {
    let enc = RegionStatsEncoder::new();
    let protos = build_prototypes(&enc, 8, 1, 64, 64)?;
    let pipeline = Pipeline::new(
        Arc::new(enc),
        Recognizer::Oracle,
        protos,
        5,
        32,
        Arc::new(MockBackend::default()),
    );
    let gold = ConceptSet::EMPTY
        .with(ConceptId::BilateralPerihilarOpacity)
        .with(ConceptId::BluntedCostophrenicAngle)
        .with(ConceptId::PulmonaryNodule);
    let image = plant_concepts(64, 64, gold, 11, 8.0)?;
    let d = pipeline.diagnose("demo", &image, Some(gold))?;
    match &d.parsed {
        Ok(p) => print!("{}", serialize(&p.report, &p.trace, Format::Markdown)),
        Err(e) => println!("unparseable report: {e}"),
    }
    Ok(())
}
