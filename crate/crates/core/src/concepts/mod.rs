//! Visual concept recognition: a trained multi-label head and a zero-shot
//! prototype matcher, both emitting [`ConceptFinding`]s in canonical order.

mod mlc;
mod vocabulary;
mod zero_shot;

use serde::{Deserialize, Serialize};

use crate::dataset::ConceptId;

pub use mlc::{
    bce_loss, mlc_gradient, mlc_objective, sigmoid, train_mlc, Standardizer, MlcHead,
    MlcHyper, TrainReport, BCE_EPS,
};
pub use vocabulary::{render_description, Vocabulary, DEFAULT_VOCABULARY_JSON};
pub use zero_shot::{
    build_prototypes, calibrate_thresholds, cosine, zero_shot_recognize, CalibrationReport,
    PrototypeSet, FALLBACK_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptFinding {
    pub concept: ConceptId,
    /// Sigmoid probability for the MLC head, cosine similarity for zero-shot.
    pub score: f64,
    pub description: String,
}

/// Findings whose score clears the threshold (`>=`), in canonical order.
pub(crate) fn select_findings<F>(
    scores: &[f64],
    threshold: F,
    vocabulary: &Vocabulary,
) -> Vec<ConceptFinding>
where
    F: Fn(usize) -> f64,
{
    ConceptId::ALL
        .iter()
        .zip(scores)
        .enumerate()
        .filter(|(k, (_, s))| **s >= threshold(*k))
        .map(|(_, (&concept, &score))| ConceptFinding {
            concept,
            score,
            description: vocabulary.describe(concept).to_string(),
        })
        .collect()
}
