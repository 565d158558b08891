//! Zero-shot concept matching against unit-norm concept prototypes.
//!
//! A prototype is the mean embedding of clean single-concept exemplar
//! images. Every embedding shares a large component with the concept-free
//! image, so prototypes built by [`build_prototypes`] record that
//! direction and similarities are measured after projecting it out.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{select_findings, ConceptFinding, Vocabulary};
use crate::dataset::{
    nodule_site_index, plant_concepts, ConceptId, ConceptSet, Sample, NODULE_SITES,
};
use crate::encoder::{Encoder, VisualEmbedding};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Threshold used when the calibration split has no positives for a concept.
pub const FALLBACK_THRESHOLD: f64 = 0.9;

/// Embeddings whose off-background part is this small relative to their
/// norm are treated as carrying no concept direction.
const RESIDUAL_TOLERANCE: f64 = 1e-9;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let n = norm(&v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(v)
}

/// Cosine similarity; errors if either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrototypeSet {
    pub concepts: Vec<ConceptId>,
    /// One unit vector per concept, canonical order.
    pub prototypes: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
    pub exemplars_per_concept: usize,
    /// Unit direction of the concept-free exemplar's embedding, removed
    /// from queries before comparison. `None` compares raw embeddings.
    pub null_direction: Option<Vec<f64>>,
    pub encoder_tag: String,
    pub config_hash: String,
    pub provenance: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub positive_mean: Vec<Option<f64>>,
    pub negative_mean: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

impl PrototypeSet {
    /// A set with raw-cosine comparison, for hand-built prototypes.
    pub fn from_vectors(
        prototypes: Vec<Vec<f64>>,
        thresholds: Vec<f64>,
        encoder_tag: impl Into<String>,
    ) -> Result<Self> {
        if prototypes.len() != ConceptId::COUNT || thresholds.len() != ConceptId::COUNT {
            return Err(Error::Dimension {
                expected: ConceptId::COUNT,
                actual: prototypes.len().min(thresholds.len()),
            });
        }
        let prototypes = prototypes
            .into_iter()
            .map(normalize)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            concepts: ConceptId::ALL.to_vec(),
            prototypes,
            thresholds,
            exemplars_per_concept: 0,
            null_direction: None,
            encoder_tag: encoder_tag.into(),
            config_hash: String::new(),
            provenance: "hand-built".into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.prototypes[0].len()
    }

    pub fn prototype(&self, concept: ConceptId) -> &[f64] {
        &self.prototypes[concept.index()]
    }

    fn project(&self, values: &[f64]) -> Vec<f64> {
        match &self.null_direction {
            Some(u) => {
                let along = dot(values, u);
                values.iter().zip(u).map(|(v, d)| v - along * d).collect()
            }
            None => values.to_vec(),
        }
    }

    /// Similarity of `embedding` to every prototype, canonical order.
    pub fn similarities(&self, embedding: &VisualEmbedding) -> Result<Vec<f64>> {
        if embedding.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: embedding.dim(),
            });
        }
        let raw_norm = norm(&embedding.values);
        if raw_norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let q = self.project(&embedding.values);
        let qn = norm(&q);
        if qn <= RESIDUAL_TOLERANCE * raw_norm {
            return Ok(vec![0.0; self.prototypes.len()]);
        }
        Ok(self
            .prototypes
            .iter()
            .map(|p| (dot(&q, p) / qn).clamp(-1.0, 1.0))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, expected_tag: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: PrototypeSet = serde_json::from_str(&text)?;
        if set.encoder_tag != expected_tag {
            return Err(Error::EncoderMismatch {
                expected: expected_tag.to_string(),
                found: set.encoder_tag,
            });
        }
        let d = set.prototypes.first().map_or(0, Vec::len);
        if set.concepts != ConceptId::ALL
            || set.prototypes.len() != ConceptId::COUNT
            || set.thresholds.len() != ConceptId::COUNT
            || set.prototypes.iter().any(|p| p.len() != d)
        {
            return Err(Error::Config(format!(
                "{} is not a consistent prototype set",
                path.display()
            )));
        }
        Ok(set)
    }
}

/// Seed of the `i`-th exemplar for `concept`. Nodule exemplars cycle
/// through the candidate sites so every location is represented.
pub(crate) fn exemplar_seed(seed: u64, concept: ConceptId, i: usize) -> u64 {
    let want = i % NODULE_SITES.len();
    (0u64..)
        .map(|attempt| derive_seed(seed, &format!("exemplar/{concept}/{i}/{attempt}")))
        .find(|&s| concept != ConceptId::PulmonaryNodule || nodule_site_index(s) == want)
        .expect("some attempt lands on every site")
}

/// Mean embedding of `exemplars_per_concept` noise-free single-concept
/// images per concept, with the concept-free direction projected out, then
/// L2-normalized. Thresholds start at [`FALLBACK_THRESHOLD`].
pub fn build_prototypes(
    encoder: &dyn Encoder,
    exemplars_per_concept: usize,
    seed: u64,
    width: usize,
    height: usize,
) -> Result<PrototypeSet> {
    if exemplars_per_concept == 0 {
        return Err(Error::Config("exemplars_per_concept must be >= 1".into()));
    }
    let blank = plant_concepts(width, height, ConceptSet::EMPTY, seed, 0.0)?;
    let null = encoder.encode(&blank)?;
    let null_direction = normalize(null.values).ok();
    let mut set = PrototypeSet {
        concepts: ConceptId::ALL.to_vec(),
        prototypes: Vec::with_capacity(ConceptId::COUNT),
        thresholds: vec![FALLBACK_THRESHOLD; ConceptId::COUNT],
        exemplars_per_concept,
        null_direction,
        encoder_tag: encoder.tag().to_string(),
        config_hash: String::new(),
        provenance: "image-exemplar prototypes (mean of clean single-concept embeddings)".into(),
    };
    for concept in ConceptId::ALL {
        let mut sum = vec![0.0; encoder.dim()];
        for i in 0..exemplars_per_concept {
            let s = exemplar_seed(seed, concept, i);
            let img = plant_concepts(width, height, ConceptSet::EMPTY.with(concept), s, 0.0)?;
            let emb = encoder.encode(&img)?;
            sum.iter_mut().zip(&emb.values).for_each(|(a, v)| *a += v);
        }
        let mean: Vec<f64> = sum.iter().map(|v| v / exemplars_per_concept as f64).collect();
        set.prototypes.push(normalize(set.project(&mean))?);
    }
    let key = format!(
        "prototypes:{}:n={exemplars_per_concept}:seed={seed}:{width}x{height}",
        encoder.tag()
    );
    set.config_hash = hex::encode(Sha256::digest(key.as_bytes()))[..16].to_string();
    Ok(set)
}

/// Per concept, set the threshold to the midpoint of the mean similarity of
/// calibration positives and negatives.
pub fn calibrate_thresholds(
    prototypes: &PrototypeSet,
    calib: &[Sample],
    encoder: &dyn Encoder,
) -> Result<(PrototypeSet, CalibrationReport)> {
    if calib.is_empty() {
        return Err(Error::EmptyInput("calibration set"));
    }
    let mut sims = Vec::with_capacity(calib.len());
    for s in calib {
        sims.push(prototypes.similarities(&encoder.encode(&s.image)?)?);
    }
    let golds: Vec<ConceptSet> = calib.iter().map(|s| s.gold_concepts).collect();
    calibrate_from_similarities(prototypes, &sims, &golds)
}

pub(crate) fn calibrate_from_similarities(
    prototypes: &PrototypeSet,
    sims: &[Vec<f64>],
    golds: &[ConceptSet],
) -> Result<(PrototypeSet, CalibrationReport)> {
    let mut out = prototypes.clone();
    let mut report = CalibrationReport::default();
    for concept in ConceptId::ALL {
        let k = concept.index();
        let mean = |positive: bool| {
            let vals: Vec<f64> = sims
                .iter()
                .zip(golds)
                .filter(|(_, g)| g.contains(concept) == positive)
                .map(|(s, _)| s[k])
                .collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let (pos, neg) = (mean(true), mean(false));
        out.thresholds[k] = match (pos, neg) {
            (Some(p), Some(n)) => 0.5 * (p + n),
            (None, _) => {
                report.warnings.push(format!(
                    "{concept}: no positives in calibration split, threshold {FALLBACK_THRESHOLD}"
                ));
                FALLBACK_THRESHOLD
            }
            (Some(_), None) => {
                report.warnings.push(format!(
                    "{concept}: no negatives in calibration split, threshold {FALLBACK_THRESHOLD}"
                ));
                FALLBACK_THRESHOLD
            }
        };
        report.positive_mean.push(pos);
        report.negative_mean.push(neg);
    }
    Ok((out, report))
}

pub fn zero_shot_recognize(
    embedding: &VisualEmbedding,
    prototypes: &PrototypeSet,
    vocabulary: &Vocabulary,
) -> Result<Vec<ConceptFinding>> {
    let sims = prototypes.similarities(embedding)?;
    Ok(select_findings(&sims, |k| prototypes.thresholds[k], vocabulary))
}
