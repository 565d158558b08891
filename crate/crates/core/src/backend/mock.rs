//! Rule-based stand-in for a language model. It reads the concept bullets
//! back out of the prompt and answers with the rule table, so its output
//! is a known function of its input.

use super::{Backend, BackendError, CompletionResult};
use crate::concepts::Vocabulary;
use crate::cot::{has_cot_steps, GenerationRequest, CDESC_HEADER};
use crate::dataset::{fired_rule, ConceptId, ConceptSet, DiagnosticRule, DiseaseLabel};
use crate::report::{render_canonical, CoTTrace, Diagnosis, DiagnosticReport, Severity};

pub const MOCK_TAG: &str = "mock-rules-v1";

const NODULE_FOLLOW_UP: &str =
    "Further imaging (e.g., CT scan) recommended to characterize the pulmonary nodule.";

fn pathophysiology(concept: ConceptId) -> &'static str {
    match concept {
        ConceptId::RightLowerLobeOpacity | ConceptId::LeftLowerLobeOpacity => {
            "lung opacities suggest inflammation or fluid accumulation in the affected lobe"
        }
        ConceptId::BilateralPerihilarOpacity => {
            "perihilar opacities suggest inflammation or fluid accumulation around the hila, the usual distribution of pulmonary edema"
        }
        ConceptId::IncreasedLungMarkings => {
            "increased markings reflect interstitial thickening or vascular congestion"
        }
        ConceptId::ElevatedDiaphragm => {
            "an elevated hemidiaphragm can follow volume loss or raised abdominal pressure"
        }
        ConceptId::EnlargedCardiacSilhouette => {
            "an enlarged silhouette reflects chamber dilation or a pericardial effusion"
        }
        ConceptId::BluntedCostophrenicAngle => {
            "blunted angles indicate fluid layering in the pleural space"
        }
        ConceptId::PulmonaryNodule => {
            "a solitary nodule may be a granuloma or an early neoplasm and needs characterization"
        }
    }
}

fn rule_condition(rule: DiagnosticRule) -> &'static str {
    match rule {
        DiagnosticRule::EdemaWithEffusion => "bilateral perihilar opacity with blunted costophrenic angle",
        DiagnosticRule::LobarOpacity => "right or left lower lobe opacity",
        DiagnosticRule::CardiacEnlargement => "enlarged cardiac silhouette",
        DiagnosticRule::Fallthrough => "no disease pattern matched",
    }
}

fn rule_reasoning(rule: DiagnosticRule) -> &'static str {
    match rule {
        DiagnosticRule::EdemaWithEffusion => {
            "Bilateral perihilar opacities together with blunted costophrenic angles point to pulmonary edema, strongly suggesting congestive heart failure."
        }
        DiagnosticRule::LobarOpacity => {
            "A lower-lobe opacity points to an infectious consolidation, consistent with pneumonia."
        }
        DiagnosticRule::CardiacEnlargement => {
            "The enlarged cardiac silhouette, without an edema pattern or lobar opacity, indicates cardiomegaly."
        }
        DiagnosticRule::Fallthrough => {
            "The findings do not form a recognized disease pattern, so the study is read as normal."
        }
    }
}

fn recommendation(label: DiseaseLabel) -> &'static str {
    match label {
        DiseaseLabel::CongestiveHeartFailure => {
            "Echocardiography and assessment of volume status; consider diuretic therapy."
        }
        DiseaseLabel::Pneumonia => {
            "Correlate with symptoms and inflammatory markers; repeat radiograph after treatment."
        }
        DiseaseLabel::Cardiomegaly => "Echocardiography to assess cardiac size and function.",
        DiseaseLabel::Normal => "No acute follow-up required; routine clinical correlation.",
    }
}

fn severity(count: usize) -> Severity {
    match count {
        0 => Severity::Unspecified,
        1 => Severity::Mild,
        2 => Severity::Moderate,
        _ => Severity::Severe,
    }
}

/// Concept bullets under the findings header; `None` when the prompt has
/// no findings segment at all.
fn read_concepts(user: &str, vocabulary: &Vocabulary) -> Option<ConceptSet> {
    let mut lines = user.lines().skip_while(|l| l.trim() != CDESC_HEADER);
    lines.next()?;
    Some(
        lines
            .take_while(|l| !l.trim().is_empty())
            .filter_map(|l| l.trim().strip_prefix("- "))
            .filter_map(|d| vocabulary.lookup(d))
            .collect(),
    )
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    vocabulary: Vocabulary,
}

impl MockBackend {
    pub fn new(vocabulary: Vocabulary) -> Self {
        Self { vocabulary }
    }

    /// The structured report and trace the mock answers with.
    pub fn respond(&self, request: &GenerationRequest) -> (CoTTrace, DiagnosticReport, &'static str) {
        let user = request.user_text();
        let provided = read_concepts(user, &self.vocabulary);
        let concepts = provided.unwrap_or(ConceptSet::EMPTY);
        let rule = fired_rule(concepts);
        let label = rule.label();
        let describe = |c: ConceptId| self.vocabulary.describe(c).to_string();
        let descriptions: Vec<String> = concepts.iter().map(describe).collect();

        let reasoning = match provided {
            None => "No visual concept descriptions were provided, so no abnormality can be asserted and the study is read as normal.".to_string(),
            Some(s) if s.is_empty() => {
                "No abnormal visual concepts were detected; the study is read as normal.".to_string()
            }
            Some(_) => format!(
                "Observed visual concepts include {}. {}",
                descriptions.join("; "),
                rule_reasoning(rule)
            ),
        };

        let mut recommendations = recommendation(label).to_string();
        if concepts.contains(ConceptId::PulmonaryNodule) {
            recommendations.push(' ');
            recommendations.push_str(NODULE_FOLLOW_UP);
        }

        let trace = if has_cot_steps(user) {
            let findings = match provided {
                None => "No visual concept descriptions were provided.".to_string(),
                Some(s) if s.is_empty() => "No abnormal visual concepts detected.".to_string(),
                Some(_) => descriptions
                    .iter()
                    .map(|d| format!("- {d}"))
                    .collect::<Vec<_>>()
                    .join("\n"),
            };
            let patho = if concepts.is_empty() {
                "No abnormal finding requires a physiological explanation.".to_string()
            } else {
                concepts
                    .iter()
                    .map(|c| format!("- {}: {}.", describe(c), pathophysiology(c)))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            let diagnosis = format!(
                "Rule {} ({}) fired, giving {}.",
                rule.code(),
                rule_condition(rule),
                label
            );
            let matched = rule.matched(concepts);
            let justification = if matched.is_empty() {
                "No concept required by a disease rule is present, so the diagnosis defaults to normal.".to_string()
            } else {
                format!(
                    "The diagnosis of {} rests on: {}.",
                    label.display_name(),
                    matched.iter().map(describe).collect::<Vec<_>>().join("; ")
                )
            };
            CoTTrace::new([findings, patho, diagnosis, justification])
        } else {
            CoTTrace::absent()
        };

        let report = DiagnosticReport {
            primary_diagnosis: Diagnosis::Recognized(label),
            reasoning,
            observed_concepts: descriptions,
            severity: severity(concepts.len()),
            recommendations,
        };
        let note = if provided.is_some() {
            "None observed."
        } else {
            "No visual concepts were provided."
        };
        (trace, report, note)
    }

    pub fn complete(&self, request: &GenerationRequest) -> CompletionResult {
        let (trace, report, note) = self.respond(request);
        CompletionResult {
            text: render_canonical(&report, &trace, note),
            backend_tag: MOCK_TAG.to_string(),
            attempts: 1,
            latency_ms: 0,
        }
    }
}

/// Mock completion with the bundled vocabulary.
pub fn mock_generate(request: &GenerationRequest) -> CompletionResult {
    MockBackend::default().complete(request)
}

impl Backend for MockBackend {
    fn tag(&self) -> &str {
        MOCK_TAG
    }

    fn generate(&self, request: &GenerationRequest) -> Result<CompletionResult, BackendError> {
        Ok(self.complete(request))
    }

    fn lenient_by_default(&self) -> bool {
        false
    }
}
