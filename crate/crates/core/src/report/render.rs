use serde::{Deserialize, Serialize};

use super::{CoTTrace, Diagnosis, DiagnosticReport, Severity, StepKey, SECTIONS};
use crate::dataset::DiseaseLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    CanonicalText,
    Json,
    Markdown,
}

/// Line written under VISUAL CONCEPTS when the list is empty. Not a
/// bullet, so it parses back to an empty list.
const NO_CONCEPTS: &str = "None observed.";

pub fn serialize(report: &DiagnosticReport, trace: &CoTTrace, format: Format) -> String {
    match format {
        Format::CanonicalText => render_canonical(report, trace, NO_CONCEPTS),
        Format::Json => {
            let doc = ReportDocument::new(report, trace);
            serde_json::to_string_pretty(&doc).expect("report document serializes")
        }
        Format::Markdown => render_markdown(report, trace),
    }
}

pub(crate) fn render_canonical(
    report: &DiagnosticReport,
    trace: &CoTTrace,
    empty_concepts_note: &str,
) -> String {
    let mut out = String::new();
    if trace.present {
        for key in StepKey::ALL {
            out.push_str(&key.header());
            out.push('\n');
            out.push_str(trace.step(key));
            out.push_str("\n\n");
        }
    }
    let concepts = if report.observed_concepts.is_empty() {
        empty_concepts_note.to_string()
    } else {
        report
            .observed_concepts
            .iter()
            .map(|c| format!("- {c}"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let bodies = [
        report.primary_diagnosis.text().to_string(),
        report.reasoning.clone(),
        concepts,
        report.severity.to_string(),
        report.recommendations.clone(),
    ];
    for (i, (name, body)) in SECTIONS.iter().zip(bodies).enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("== {name} ==\n{body}\n"));
    }
    out
}

fn title_case(section: &str) -> String {
    section
        .split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_string() + &c.as_str().to_lowercase(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn render_markdown(report: &DiagnosticReport, trace: &CoTTrace) -> String {
    let mut out = String::from("# Diagnostic Report\n\n");
    let diagnosis = match &report.primary_diagnosis {
        Diagnosis::Recognized(l) => format!("**{}** (`{}`)", l.display_name(), l.as_str()),
        Diagnosis::Unrecognized(t) => format!("{t} (unrecognized)"),
    };
    let concepts = if report.observed_concepts.is_empty() {
        "_None observed._".to_string()
    } else {
        report
            .observed_concepts
            .iter()
            .map(|c| format!("- {c}"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let bodies = [
        diagnosis,
        report.reasoning.clone(),
        concepts,
        report.severity.to_string(),
        report.recommendations.clone(),
    ];
    for (name, body) in SECTIONS.iter().zip(bodies) {
        out.push_str(&format!("## {}\n\n{body}\n\n", title_case(name)));
    }
    if trace.present {
        out.push_str("## Reasoning Trace\n");
        for key in StepKey::ALL {
            out.push_str(&format!(
                "\n### Step {}: {}\n\n{}\n",
                key.number(),
                title_case(key.as_str()),
                trace.step(key)
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceDocument {
    pub findings: String,
    pub pathophysiology: String,
    pub diagnosis: String,
    pub justification: String,
}

/// Stable-key JSON form of a report and its trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    pub primary_diagnosis: String,
    pub recognized: bool,
    pub reasoning: String,
    pub observed_concepts: Vec<String>,
    pub severity: Severity,
    pub recommendations: String,
    /// Omitted entirely when the report carried no reasoning trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot_trace: Option<TraceDocument>,
}

impl ReportDocument {
    pub fn new(report: &DiagnosticReport, trace: &CoTTrace) -> Self {
        Self {
            primary_diagnosis: report.primary_diagnosis.text().to_string(),
            recognized: report.primary_diagnosis.is_recognized(),
            reasoning: report.reasoning.clone(),
            observed_concepts: report.observed_concepts.clone(),
            severity: report.severity,
            recommendations: report.recommendations.clone(),
            cot_trace: trace.present.then(|| TraceDocument {
                findings: trace.findings_text.clone(),
                pathophysiology: trace.pathophysiology_text.clone(),
                diagnosis: trace.diagnosis_text.clone(),
                justification: trace.justification_text.clone(),
            }),
        }
    }

    pub fn into_parts(self) -> Result<(CoTTrace, DiagnosticReport)> {
        let primary_diagnosis = if self.recognized {
            Diagnosis::Recognized(DiseaseLabel::parse_loose(&self.primary_diagnosis).ok_or_else(
                || Error::Config(format!("unknown diagnosis label {:?}", self.primary_diagnosis)),
            )?)
        } else {
            Diagnosis::Unrecognized(self.primary_diagnosis)
        };
        let trace = match self.cot_trace {
            Some(t) => CoTTrace::new([t.findings, t.pathophysiology, t.diagnosis, t.justification]),
            None => CoTTrace::absent(),
        };
        Ok((
            trace,
            DiagnosticReport {
                primary_diagnosis,
                reasoning: self.reasoning,
                observed_concepts: self.observed_concepts,
                severity: self.severity,
                recommendations: self.recommendations,
            },
        ))
    }
}
