//! Output grammar for the reasoning trace and the five-section report.
//!
//! ```text
//! [STEP 1: FINDINGS]            (optional block of four steps)
//! ...
//! == PRIMARY DIAGNOSIS ==
//! == REASONING ==
//! == VISUAL CONCEPTS ==         ("- " bullet per concept)
//! == SEVERITY ==                (one token)
//! == RECOMMENDATIONS ==
//! ```

mod parse;
mod render;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concepts::Vocabulary;
use crate::dataset::DiseaseLabel;

pub use parse::{parse_report, parse_report_with, ParseOptions, ParsedReport};
pub use render::{serialize, Format, ReportDocument, TraceDocument};
pub(crate) use render::render_canonical;

/// Section names in the order the grammar requires.
pub const SECTIONS: [&str; 5] = [
    "PRIMARY DIAGNOSIS",
    "REASONING",
    "VISUAL CONCEPTS",
    "SEVERITY",
    "RECOMMENDATIONS",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepKey {
    #[serde(rename = "FINDINGS")]
    Findings,
    #[serde(rename = "PATHOPHYSIOLOGY")]
    Pathophysiology,
    #[serde(rename = "DIAGNOSIS")]
    Diagnosis,
    #[serde(rename = "JUSTIFICATION")]
    Justification,
}

impl StepKey {
    pub const ALL: [StepKey; 4] = [
        StepKey::Findings,
        StepKey::Pathophysiology,
        StepKey::Diagnosis,
        StepKey::Justification,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepKey::Findings => "FINDINGS",
            StepKey::Pathophysiology => "PATHOPHYSIOLOGY",
            StepKey::Diagnosis => "DIAGNOSIS",
            StepKey::Justification => "JUSTIFICATION",
        }
    }

    /// 1-based position in the trace.
    pub fn number(self) -> usize {
        self as usize + 1
    }

    /// The bracketed header, e.g. `[STEP 1: FINDINGS]`.
    pub fn header(self) -> String {
        format!("[STEP {}: {}]", self.number(), self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoTTrace {
    pub findings_text: String,
    pub pathophysiology_text: String,
    pub diagnosis_text: String,
    pub justification_text: String,
    /// False for direct-answer output with no step block.
    pub present: bool,
}

impl CoTTrace {
    pub fn absent() -> Self {
        Self::default()
    }

    pub fn new(steps: [String; 4]) -> Self {
        let [findings_text, pathophysiology_text, diagnosis_text, justification_text] = steps;
        Self {
            findings_text,
            pathophysiology_text,
            diagnosis_text,
            justification_text,
            present: true,
        }
    }

    pub fn step(&self, key: StepKey) -> &str {
        match key {
            StepKey::Findings => &self.findings_text,
            StepKey::Pathophysiology => &self.pathophysiology_text,
            StepKey::Diagnosis => &self.diagnosis_text,
            StepKey::Justification => &self.justification_text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Mild,
    Moderate,
    Severe,
    Unspecified,
}

impl Severity {
    pub const ALL: [Severity; 4] = [
        Severity::Mild,
        Severity::Moderate,
        Severity::Severe,
        Severity::Unspecified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Mild => "mild",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
            Severity::Unspecified => "unspecified",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        let t = token.trim().to_ascii_lowercase();
        Severity::ALL.into_iter().find(|s| s.as_str() == t)
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A primary diagnosis, either matched to a label or kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnosis {
    Recognized(DiseaseLabel),
    Unrecognized(String),
}

impl Diagnosis {
    pub fn from_text(text: &str) -> Self {
        match DiseaseLabel::parse_loose(text) {
            Some(label) => Diagnosis::Recognized(label),
            None => Diagnosis::Unrecognized(text.trim().to_string()),
        }
    }

    pub fn label(&self) -> Option<DiseaseLabel> {
        match self {
            Diagnosis::Recognized(l) => Some(*l),
            Diagnosis::Unrecognized(_) => None,
        }
    }

    pub fn is_recognized(&self) -> bool {
        self.label().is_some()
    }

    pub fn text(&self) -> &str {
        match self {
            Diagnosis::Recognized(l) => l.as_str(),
            Diagnosis::Unrecognized(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagnosticReport {
    pub primary_diagnosis: Diagnosis,
    pub reasoning: String,
    pub observed_concepts: Vec<String>,
    pub severity: Severity,
    pub recommendations: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IssueCode {
    MissingSection,
    UnknownSeverity,
    UnrecognizedDiagnosis,
    ConceptNotInVocabulary,
    EmptySection,
    DuplicateSection,
}

/// A parse or validation finding. `location` is a byte offset into the
/// parsed text; issues raised on an already-structured report use 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("{code:?} at byte {location}: {detail}")]
pub struct ValidationIssue {
    pub code: IssueCode,
    pub detail: String,
    pub location: usize,
}

impl ValidationIssue {
    pub fn new(code: IssueCode, detail: impl Into<String>, location: usize) -> Self {
        Self {
            code,
            detail: detail.into(),
            location,
        }
    }
}

/// Content checks on a parsed report; an empty list means valid.
pub fn validate(report: &DiagnosticReport, vocabulary: &Vocabulary) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    if let Diagnosis::Unrecognized(text) = &report.primary_diagnosis {
        issues.push(ValidationIssue::new(
            IssueCode::UnrecognizedDiagnosis,
            format!("diagnosis {text:?} is not a known label"),
            0,
        ));
    }
    if report.reasoning.trim().is_empty() {
        issues.push(ValidationIssue::new(IssueCode::EmptySection, "REASONING", 0));
    }
    for concept in &report.observed_concepts {
        if vocabulary.lookup(concept).is_none() {
            issues.push(ValidationIssue::new(
                IssueCode::ConceptNotInVocabulary,
                concept.clone(),
                0,
            ));
        }
    }
    if report.recommendations.trim().is_empty() {
        issues.push(ValidationIssue::new(
            IssueCode::EmptySection,
            "RECOMMENDATIONS",
            0,
        ));
    }
    issues
}

#[cfg(test)]
mod tests;
