//! Render the prompt for one set of findings under each ablation preset.

use xraycot::alignment::{align, embed_concepts, projection_matrix};
use xraycot::concepts::{build_prototypes, ConceptFinding, Vocabulary};
use xraycot::cot::{ablation_presets, assemble_prompt, render_messages, PromptTemplates};
use xraycot::dataset::{plant_concepts, ConceptId, ConceptSet};
use xraycot::encoder::{Encoder, RegionStatsEncoder};

fn main() -> xraycot::Result<()> {
    let vocab = Vocabulary::default();
    let set = ConceptSet::EMPTY
        .with(ConceptId::RightLowerLobeOpacity)
        .with(ConceptId::IncreasedLungMarkings);
    let findings: Vec<_> = set
        .iter()
        .map(|c| ConceptFinding { concept: c, score: 1.0, description: vocab.describe(c).to_string() })
        .collect();

    let enc = RegionStatsEncoder::new();
    let protos = build_prototypes(&enc, 4, 1, 64, 64)?;
    let projection = projection_matrix(3, 32, enc.dim());
    let f_img = enc.encode(&plant_concepts(64, 64, set, 2, 0.0)?)?;
    let aligned = align(&f_img, embed_concepts(&findings, &protos, &projection)?, &projection)?;

    let templates = PromptTemplates::default();
    for (name, ablation) in ablation_presets() {
        let bundle = assemble_prompt(&findings, Some(&aligned), ablation, &templates, true)?;
        let request = render_messages(&bundle, &templates.cot(), ablation);
        println!("===== {name} =====");
        if let Some(system) = request.system_text() {
            println!("[system] {system}");
        }
        println!("[user]\n{}\n", request.user_text());
    }
    Ok(())
}
