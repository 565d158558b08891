//! One image through the whole chain: encode, recognize, align, prompt,
//! generate, parse.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::alignment::{align, embed_concepts, projection_matrix, AlignedRepresentation};
use crate::backend::{Backend, CompletionResult};
use crate::concepts::{zero_shot_recognize, ConceptFinding, MlcHead, PrototypeSet, Vocabulary};
use crate::cot::{assemble_prompt, render_messages, AblationConfig, GenerationRequest, PromptTemplates};
use crate::dataset::{ConceptSet, DiseaseLabel, Image, Sample};
use crate::encoder::{Encoder, VisualEmbedding};
use crate::error::{Error, Result};
use crate::report::{
    parse_report_with, validate, ParseOptions, ParsedReport, ReportDocument, ValidationIssue,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecognizerKind {
    #[default]
    Mlc,
    ZeroShot,
    /// Inject the gold concepts; for harness checks only.
    Oracle,
}

#[derive(Debug, Clone)]
pub enum Recognizer {
    Mlc(MlcHead),
    ZeroShot(PrototypeSet),
    Oracle,
}

impl Recognizer {
    pub fn kind(&self) -> RecognizerKind {
        match self {
            Recognizer::Mlc(_) => RecognizerKind::Mlc,
            Recognizer::ZeroShot(_) => RecognizerKind::ZeroShot,
            Recognizer::Oracle => RecognizerKind::Oracle,
        }
    }

    pub fn recognize(
        &self,
        embedding: &VisualEmbedding,
        gold: Option<ConceptSet>,
        vocabulary: &Vocabulary,
    ) -> Result<Vec<ConceptFinding>> {
        match self {
            Recognizer::Mlc(head) => head.predict(embedding, vocabulary),
            Recognizer::ZeroShot(set) => zero_shot_recognize(embedding, set, vocabulary),
            Recognizer::Oracle => {
                let gold = gold.ok_or_else(|| {
                    Error::Precondition("oracle recognizer needs gold concepts".into())
                })?;
                Ok(gold
                    .iter()
                    .map(|c| ConceptFinding {
                        concept: c,
                        score: 1.0,
                        description: vocabulary.describe(c).to_string(),
                    })
                    .collect())
            }
        }
    }
}

#[derive(Clone)]
pub struct Pipeline {
    pub encoder: Arc<dyn Encoder>,
    pub recognizer: Recognizer,
    /// Concept vectors fed to the alignment step.
    pub prototypes: PrototypeSet,
    pub projection: Array2<f64>,
    pub vocabulary: Vocabulary,
    pub templates: PromptTemplates,
    pub ablation: AblationConfig,
    pub include_digest: bool,
    pub lenient_severity: bool,
    pub backend: Arc<dyn Backend>,
}

impl Pipeline {
    /// Defaults for everything but the learned parts; lenient severity
    /// follows the backend's preference.
    pub fn new(
        encoder: Arc<dyn Encoder>,
        recognizer: Recognizer,
        prototypes: PrototypeSet,
        align_seed: u64,
        d_a: usize,
        backend: Arc<dyn Backend>,
    ) -> Self {
        let projection = projection_matrix(align_seed, d_a, encoder.dim());
        let lenient_severity = backend.lenient_by_default();
        Self {
            encoder,
            recognizer,
            prototypes,
            projection,
            vocabulary: Vocabulary::default(),
            templates: PromptTemplates::default(),
            ablation: AblationConfig::FULL,
            include_digest: true,
            lenient_severity,
            backend,
        }
    }

    pub fn with_ablation(mut self, ablation: AblationConfig) -> Self {
        self.ablation = ablation;
        self
    }

    pub fn with_recognizer(mut self, recognizer: Recognizer) -> Self {
        self.recognizer = recognizer;
        self
    }

    /// Run every stage on one image. Backend failures are errors; a report
    /// that fails to parse is returned in [`Diagnosis::parsed`].
    pub fn diagnose(
        &self,
        sample_id: &str,
        image: &Image,
        gold: Option<ConceptSet>,
    ) -> Result<Diagnosis> {
        let embedding = self.encoder.encode(image)?;
        let findings = self.recognizer.recognize(&embedding, gold, &self.vocabulary)?;
        let aligned = if self.ablation.use_fimg {
            let concept_embs = embed_concepts(&findings, &self.prototypes, &self.projection)?;
            Some(align(&embedding, concept_embs, &self.projection)?)
        } else {
            None
        };
        let bundle = assemble_prompt(
            &findings,
            aligned.as_ref(),
            self.ablation,
            &self.templates,
            self.include_digest,
        )?;
        let request = render_messages(&bundle, &self.templates.cot(), self.ablation)
            .with_metadata(sample_id, self.backend.tag());
        let completion = self.backend.generate(&request)?;
        let parsed = parse_report_with(
            &completion.text,
            ParseOptions {
                lenient_severity: self.lenient_severity,
            },
        );
        let issues = match &parsed {
            Ok(p) => {
                let mut all = p.issues.clone();
                all.extend(validate(&p.report, &self.vocabulary));
                all
            }
            Err(e) => vec![e.clone()],
        };
        Ok(Diagnosis {
            findings,
            aligned,
            request,
            completion,
            parsed,
            issues,
        })
    }

    pub fn run_sample(&self, sample: &Sample) -> Result<SampleOutcome> {
        let d = self.diagnose(&sample.sample_id, &sample.image, Some(sample.gold_concepts))?;
        Ok(SampleOutcome::new(sample, d))
    }
}

#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub findings: Vec<ConceptFinding>,
    pub aligned: Option<AlignedRepresentation>,
    pub request: GenerationRequest,
    pub completion: CompletionResult,
    pub parsed: std::result::Result<ParsedReport, ValidationIssue>,
    /// Parse error or lenient-parse issues plus validation issues.
    pub issues: Vec<ValidationIssue>,
}

impl Diagnosis {
    /// The recognized diagnosis label, if the report parsed and named one.
    pub fn predicted(&self) -> Option<DiseaseLabel> {
        self.parsed
            .as_ref()
            .ok()
            .and_then(|p| p.report.primary_diagnosis.label())
    }
}

/// Per-sample record kept for metrics and written to `per_sample.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub sample_id: String,
    pub gold_concepts: ConceptSet,
    pub gold_disease: DiseaseLabel,
    pub predicted_concepts: ConceptSet,
    pub findings: Vec<ConceptFinding>,
    /// `None` when the report failed to parse or named no known label.
    pub predicted_disease: Option<DiseaseLabel>,
    pub report: Option<ReportDocument>,
    pub issues: Vec<ValidationIssue>,
    pub visual_proj: Option<Vec<f64>>,
    pub attempts: u32,
    /// Raw backend text, kept only when it did not parse.
    pub raw_text: Option<String>,
}

impl SampleOutcome {
    pub fn new(sample: &Sample, d: Diagnosis) -> Self {
        let predicted_disease = d.predicted();
        let (report, raw_text) = match &d.parsed {
            Ok(p) => (Some(ReportDocument::new(&p.report, &p.trace)), None),
            Err(_) => (None, Some(d.completion.text.clone())),
        };
        Self {
            sample_id: sample.sample_id.clone(),
            gold_concepts: sample.gold_concepts,
            gold_disease: sample.gold_disease,
            predicted_concepts: d.findings.iter().map(|f| f.concept).collect(),
            findings: d.findings,
            predicted_disease,
            report,
            issues: d.issues,
            visual_proj: d.aligned.map(|a| a.visual_proj),
            attempts: d.completion.attempts,
            raw_text,
        }
    }
}
