//! Metrics, full-pipeline evaluation runs, and the ablation and
//! recognizer-comparison sweeps.

mod metrics;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::concepts::{MlcHead, PrototypeSet};
use crate::cot::ablation_presets;
use crate::dataset::{ConceptId, DiseaseLabel, Sample};
use crate::error::{Error, Result};
use crate::pipeline::{Pipeline, Recognizer, SampleOutcome};

pub use metrics::{
    bacc_multiclass, concept_metrics, f1_macro_multiclass, BinaryCounts, ConceptScores,
    ConfusionCounts, ConfusionMatrix,
};

pub const LVLM_CONCEPTS: &str = "LVLM-Concepts";
pub const MLC_CONCEPTS: &str = "MLC-Concepts";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: DiseaseLabel,
    pub gold: u64,
    pub predicted: u64,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptRow {
    pub concept: ConceptId,
    #[serde(flatten)]
    pub counts: BinaryCounts,
    pub bacc: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub diagnosis_bacc: f64,
    pub diagnosis_f1_macro: f64,
    /// `None` when no concept has both gold positives and negatives.
    pub concept_bacc: Option<f64>,
    pub concept_f1_macro: Option<f64>,
    pub per_class: Vec<ClassRow>,
    pub per_concept: Vec<ConceptRow>,
    pub confusion: ConfusionMatrix,
    pub n_samples: usize,
    pub n_invalid: u64,
    pub config_fingerprint: String,
    /// Digest of the evaluated sample ids, in order.
    pub sample_fingerprint: String,
    pub warnings: Vec<String>,
}

fn sample_fingerprint(ids: impl Iterator<Item = impl AsRef<str>>) -> String {
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_ref().as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())[..16].to_string()
}

/// Reduce per-sample outcomes to a report. The reduction only counts, so
/// it does not depend on outcome order beyond the sample fingerprint.
pub fn metrics_from_outcomes(outcomes: &[SampleOutcome], fingerprint: &str) -> Result<MetricsReport> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("evaluation samples"));
    }
    let mut confusion =
        ConfusionMatrix::new(DiseaseLabel::ALL.iter().map(|d| d.to_string()).collect());
    let mut per_concept = [BinaryCounts::default(); ConceptId::COUNT];
    for o in outcomes {
        confusion.record(o.gold_disease.index(), o.predicted_disease.map(DiseaseLabel::index));
        for c in ConceptId::ALL {
            per_concept[c.index()]
                .record(o.predicted_concepts.contains(c), o.gold_concepts.contains(c));
        }
    }
    let concepts = concept_metrics(&per_concept);
    let mut warnings = Vec::new();
    let recalls = confusion.recalls();
    let f1s = confusion.f1_scores();
    for d in DiseaseLabel::ALL {
        if confusion.gold_count(d.index()) == 0 {
            warnings.push(format!("{d}: no gold samples, excluded from diagnosis BACC"));
        }
    }
    warnings.extend(concepts.warnings.iter().cloned());
    Ok(MetricsReport {
        diagnosis_bacc: bacc_multiclass(&confusion)?,
        diagnosis_f1_macro: f1_macro_multiclass(&confusion)?,
        concept_bacc: concepts.bacc,
        concept_f1_macro: concepts.f1_macro,
        per_class: DiseaseLabel::ALL
            .iter()
            .map(|&d| ClassRow {
                label: d,
                gold: confusion.gold_count(d.index()),
                predicted: confusion.predicted_count(d.index()),
                recall: recalls[d.index()],
                f1: f1s[d.index()],
            })
            .collect(),
        per_concept: ConceptId::ALL
            .iter()
            .map(|&c| ConceptRow {
                concept: c,
                counts: per_concept[c.index()],
                bacc: concepts.per_concept_bacc[c.index()],
                f1: concepts.per_concept_f1[c.index()],
            })
            .collect(),
        n_invalid: confusion.invalid_count(),
        confusion,
        n_samples: outcomes.len(),
        config_fingerprint: fingerprint.to_string(),
        sample_fingerprint: sample_fingerprint(outcomes.iter().map(|o| &o.sample_id)),
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads for per-sample execution.
    pub parallelism: usize,
    pub config_fingerprint: String,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            parallelism: 1,
            config_fingerprint: String::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluationRun {
    pub metrics: MetricsReport,
    /// In sample order.
    pub outcomes: Vec<SampleOutcome>,
}

/// A run that stopped early. `completed` holds every sample that finished,
/// in sample order, so it can be written out as partial results.
#[derive(Debug)]
pub struct RunAborted {
    pub completed: Vec<SampleOutcome>,
    pub error: Error,
}

impl fmt::Display for RunAborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "run aborted after {} completed sample(s): {}",
            self.completed.len(),
            self.error
        )
    }
}

impl std::error::Error for RunAborted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RunAborted {
    fn from(error: Error) -> Self {
        Self {
            completed: Vec::new(),
            error,
        }
    }
}

pub fn evaluate_run(
    samples: &[Sample],
    pipeline: &Pipeline,
    options: &RunOptions,
) -> std::result::Result<EvaluationRun, RunAborted> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("evaluation samples").into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism.max(1))
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    let results: Vec<Result<SampleOutcome>> =
        pool.install(|| samples.par_iter().map(|s| pipeline.run_sample(s)).collect());
    let mut outcomes = Vec::with_capacity(results.len());
    let mut failure = None;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) if failure.is_none() => failure = Some(e),
            Err(_) => {}
        }
    }
    if let Some(error) = failure {
        return Err(RunAborted {
            completed: outcomes,
            error,
        });
    }
    let metrics = metrics_from_outcomes(&outcomes, &options.config_fingerprint)?;
    Ok(EvaluationRun { metrics, outcomes })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub name: String,
    pub run: EvaluationRun,
}

/// The five ablation presets over the same samples and artifacts.
pub fn ablation_sweep(
    samples: &[Sample],
    base: &Pipeline,
    options: &RunOptions,
) -> std::result::Result<Vec<SweepRow>, RunAborted> {
    ablation_presets()
        .into_iter()
        .map(|(name, ablation)| {
            let p = base.clone().with_ablation(ablation);
            Ok(SweepRow {
                name: name.to_string(),
                run: evaluate_run(samples, &p, options)?,
            })
        })
        .collect()
}

/// Zero-shot prototypes against the trained head, everything else equal.
pub fn recognizer_comparison(
    samples: &[Sample],
    base: &Pipeline,
    head: &MlcHead,
    prototypes: &PrototypeSet,
    options: &RunOptions,
) -> std::result::Result<Vec<SweepRow>, RunAborted> {
    [
        (LVLM_CONCEPTS, Recognizer::ZeroShot(prototypes.clone())),
        (MLC_CONCEPTS, Recognizer::Mlc(head.clone())),
    ]
    .into_iter()
    .map(|(name, recognizer)| {
        let p = base.clone().with_recognizer(recognizer);
        Ok(SweepRow {
            name: name.to_string(),
            run: evaluate_run(samples, &p, options)?,
        })
    })
    .collect()
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| format!("{:.2}", 100.0 * x))
}

/// Aligned plain-text table, one row per method, values in percent.
pub fn render_table(rows: &[(&str, &MetricsReport)]) -> String {
    let header = [
        "Method",
        "Diag BACC (%)",
        "Diag F1 (%)",
        "Concept BACC (%)",
        "Concept F1 (%)",
        "N",
        "Invalid",
    ];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|(name, m)| {
            [
                name.to_string(),
                pct(Some(m.diagnosis_bacc)),
                pct(Some(m.diagnosis_f1_macro)),
                pct(m.concept_bacc),
                pct(m.concept_f1_macro),
                m.n_samples.to_string(),
                m.n_invalid.to_string(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            body.iter()
                .map(|r| r[i].len())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&line(rule.iter().map(String::as_str).collect()));
    out.push('\n');
    for r in &body {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests;
