use super::{
    CoTTrace, Diagnosis, DiagnosticReport, IssueCode, Severity, StepKey, ValidationIssue,
    SECTIONS,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Map an unknown severity token to `unspecified` (recording an issue)
    /// instead of failing.
    pub lenient_severity: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedReport {
    pub trace: CoTTrace,
    pub report: DiagnosticReport,
    /// Non-fatal issues met while parsing (lenient severity only).
    pub issues: Vec<ValidationIssue>,
}

struct Line<'a> {
    start: usize,
    /// Offset just past the line terminator.
    end: usize,
    text: &'a str,
}

fn lines(text: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    for raw in text.split_inclusive('\n') {
        let end = start + raw.len();
        let body = raw.strip_suffix('\n').unwrap_or(raw);
        let body = body.strip_suffix('\r').unwrap_or(body);
        out.push(Line {
            start,
            end,
            text: body,
        });
        start = end;
    }
    out
}

fn section_index(line: &str) -> Option<usize> {
    let name = line.trim().strip_prefix("==")?.strip_suffix("==")?.trim();
    SECTIONS.iter().position(|s| *s == name)
}

/// Trimmed slice with the byte offset of its first character.
fn trimmed(text: &str, base: usize) -> (&str, usize) {
    let lead = text.len() - text.trim_start().len();
    (text.trim(), base + lead)
}

/// Strict parse; unknown severity tokens are an error.
pub fn parse_report(text: &str) -> Result<(CoTTrace, DiagnosticReport), ValidationIssue> {
    let parsed = parse_report_with(text, ParseOptions::default())?;
    Ok((parsed.trace, parsed.report))
}

pub fn parse_report_with(
    text: &str,
    options: ParseOptions,
) -> Result<ParsedReport, ValidationIssue> {
    let lines = lines(text);

    // (section, delimiter line start, body start)
    let mut delimiters: Vec<(usize, usize, usize)> = Vec::with_capacity(SECTIONS.len());
    for line in &lines {
        let Some(idx) = section_index(line.text) else {
            continue;
        };
        let expected = delimiters.len();
        if idx < expected {
            return Err(ValidationIssue::new(
                IssueCode::DuplicateSection,
                SECTIONS[idx],
                line.start,
            ));
        }
        if idx > expected {
            return Err(ValidationIssue::new(
                IssueCode::MissingSection,
                SECTIONS[expected],
                line.start,
            ));
        }
        delimiters.push((idx, line.start, line.end));
    }
    if delimiters.len() < SECTIONS.len() {
        return Err(ValidationIssue::new(
            IssueCode::MissingSection,
            SECTIONS[delimiters.len()],
            text.len(),
        ));
    }

    let body = |i: usize| {
        let from = delimiters[i].2;
        let to = delimiters.get(i + 1).map_or(text.len(), |d| d.1);
        trimmed(&text[from..to], from)
    };

    let trace = parse_trace(&text[..delimiters[0].1], &lines)?;

    let (diag, diag_at) = body(0);
    if diag.is_empty() {
        return Err(ValidationIssue::new(
            IssueCode::EmptySection,
            SECTIONS[0],
            diag_at,
        ));
    }
    let (reasoning, _) = body(1);
    let (concepts, _) = body(2);
    let observed_concepts = concepts
        .lines()
        .filter_map(|l| l.trim_start().strip_prefix("- "))
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(String::from)
        .collect();
    let (sev_text, sev_at) = body(3);
    let mut issues = Vec::new();
    let severity = match Severity::parse(sev_text) {
        Some(s) => s,
        None => {
            let issue = ValidationIssue::new(
                IssueCode::UnknownSeverity,
                format!("severity {sev_text:?} is not one of mild, moderate, severe, unspecified"),
                sev_at,
            );
            if !options.lenient_severity {
                return Err(issue);
            }
            issues.push(issue);
            Severity::Unspecified
        }
    };
    let (recommendations, _) = body(4);

    Ok(ParsedReport {
        trace,
        report: DiagnosticReport {
            primary_diagnosis: Diagnosis::from_text(diag),
            reasoning: reasoning.to_string(),
            observed_concepts,
            severity,
            recommendations: recommendations.to_string(),
        },
        issues,
    })
}

/// Steps live in the text before the first section delimiter. Text with no
/// step header at all is a direct-answer report.
fn parse_trace(preamble: &str, lines: &[Line<'_>]) -> Result<CoTTrace, ValidationIssue> {
    let end = preamble.len();
    let headers: Vec<&Line<'_>> = lines
        .iter()
        .take_while(|l| l.start < end)
        .filter(|l| l.text.trim_start().starts_with("[STEP"))
        .collect();
    if headers.is_empty() {
        return Ok(CoTTrace::absent());
    }
    if headers.len() > StepKey::ALL.len() {
        let extra = headers[StepKey::ALL.len()];
        return Err(ValidationIssue::new(
            IssueCode::DuplicateSection,
            extra.text.trim().to_string(),
            extra.start,
        ));
    }
    let mut texts: [String; 4] = Default::default();
    for (k, key) in StepKey::ALL.into_iter().enumerate() {
        let name = format!("STEP {}: {}", key.number(), key.as_str());
        let Some(line) = headers.get(k) else {
            return Err(ValidationIssue::new(IssueCode::MissingSection, name, end));
        };
        let content = line.text.trim_start();
        let header = key.header();
        if !content.starts_with(&header) {
            return Err(ValidationIssue::new(
                IssueCode::MissingSection,
                name,
                line.start,
            ));
        }
        let from = line.start + (line.text.len() - content.len()) + header.len();
        let to = headers.get(k + 1).map_or(end, |h| h.start);
        let (step, at) = trimmed(&preamble[from..to], from);
        if step.is_empty() {
            return Err(ValidationIssue::new(IssueCode::EmptySection, name, at));
        }
        texts[k] = step.to_string();
    }
    Ok(CoTTrace::new(texts))
}
