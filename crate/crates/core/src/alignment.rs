//! Linear projection of the visual embedding and the concept prototypes
//! into one shared space.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::concepts::{ConceptFinding, PrototypeSet};
use crate::dataset::ConceptId;
use crate::encoder::VisualEmbedding;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const DEFAULT_D_A: usize = 32;
pub const ALIGNMENT_PROVENANCE: &str = "linear projection (seeded, frozen)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignConfig {
    /// Defaults to a stream derived from the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_d_a")]
    pub d_a: usize,
}

fn default_d_a() -> usize {
    DEFAULT_D_A
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            seed: None,
            d_a: DEFAULT_D_A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedRepresentation {
    pub visual_proj: Vec<f64>,
    pub concept_embs: Vec<(ConceptId, Vec<f64>)>,
    pub d_a: usize,
    pub provenance: String,
}

/// Frozen `d_a x d_v` projection with entries uniform in
/// `±sqrt(3 / d_v)`, so a unit-variance input keeps unit variance.
pub fn projection_matrix(seed: u64, d_a: usize, d_v: usize) -> Array2<f64> {
    let mut rng = SplitMix64::for_purpose(seed, "align-projection");
    let a = (3.0 / d_v as f64).sqrt();
    Array2::from_shape_simple_fn((d_a, d_v), || rng.uniform(-a, a))
}

fn project(projection: &Array2<f64>, v: &[f64]) -> Result<Vec<f64>> {
    if projection.ncols() != v.len() {
        return Err(Error::Dimension {
            expected: projection.ncols(),
            actual: v.len(),
        });
    }
    let out = projection.dot(&Array1::from(v.to_vec())).to_vec();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("aligned representation"));
    }
    Ok(out)
}

/// `projection · prototype` for each finding, in input order.
pub fn embed_concepts(
    findings: &[ConceptFinding],
    prototypes: &PrototypeSet,
    projection: &Array2<f64>,
) -> Result<Vec<(ConceptId, Vec<f64>)>> {
    findings
        .iter()
        .map(|f| {
            let idx = prototypes
                .concepts
                .iter()
                .position(|c| *c == f.concept)
                .ok_or_else(|| Error::UnknownConcept(f.concept.to_string()))?;
            Ok((f.concept, project(projection, &prototypes.prototypes[idx])?))
        })
        .collect()
}

pub fn align(
    f_img: &VisualEmbedding,
    concept_embs: Vec<(ConceptId, Vec<f64>)>,
    projection_v: &Array2<f64>,
) -> Result<AlignedRepresentation> {
    let d_a = projection_v.nrows();
    if let Some((_, v)) = concept_embs.iter().find(|(_, v)| v.len() != d_a) {
        return Err(Error::Dimension {
            expected: d_a,
            actual: v.len(),
        });
    }
    Ok(AlignedRepresentation {
        visual_proj: project(projection_v, &f_img.values)?,
        concept_embs,
        d_a,
        provenance: ALIGNMENT_PROVENANCE.into(),
    })
}
