use proptest::prelude::*;

use super::*;

const WELL_FORMED: &str = "\
== PRIMARY DIAGNOSIS ==
Pneumonia
== REASONING ==
Right lower lobe opacity is the dominant finding.
== VISUAL CONCEPTS ==
- detected lung opacities, located in the right lower lobe
- increased lung markings
== SEVERITY ==
moderate
== RECOMMENDATIONS ==
Follow-up radiograph after treatment.
";

fn sample_report() -> DiagnosticReport {
    DiagnosticReport {
        primary_diagnosis: Diagnosis::Recognized(DiseaseLabel::Cardiomegaly),
        reasoning: "Cardiac silhouette is enlarged.\nNo other findings.".into(),
        observed_concepts: vec![
            "cardiomegaly, with increased cardiothoracic ratio".into(),
            "increased lung markings".into(),
        ],
        severity: Severity::Moderate,
        recommendations: "Echocardiography.".into(),
    }
}

fn sample_trace() -> CoTTrace {
    CoTTrace::new([
        "a".into(),
        "b\nb2".into(),
        "c".into(),
        "d".into(),
    ])
}

#[test]
fn parses_well_formed_report() {
    let (trace, report) = parse_report(WELL_FORMED).unwrap();
    assert!(!trace.present);
    assert_eq!(
        report.primary_diagnosis,
        Diagnosis::Recognized(DiseaseLabel::Pneumonia)
    );
    assert_eq!(report.severity, Severity::Moderate);
    assert_eq!(report.observed_concepts.len(), 2);
    assert_eq!(report.recommendations, "Follow-up radiograph after treatment.");
}

#[test]
fn missing_severity_names_the_section() {
    let text = WELL_FORMED.replace("== SEVERITY ==\nmoderate\n", "");
    let err = parse_report(&text).unwrap_err();
    assert_eq!(err.code, IssueCode::MissingSection);
    assert_eq!(err.detail, "SEVERITY");
    // Reported where the recommendations delimiter appeared instead.
    assert_eq!(err.location, text.find("== RECOMMENDATIONS ==").unwrap());
}

#[test]
fn truncated_report_points_at_end() {
    let cut = WELL_FORMED.find("== RECOMMENDATIONS ==").unwrap();
    let err = parse_report(&WELL_FORMED[..cut]).unwrap_err();
    assert_eq!(err.detail, "RECOMMENDATIONS");
    assert_eq!(err.location, cut);
}

#[test]
fn duplicate_section_offset_is_exact() {
    let text = WELL_FORMED.replace(
        "== VISUAL CONCEPTS ==",
        "== REASONING ==\nagain\n== VISUAL CONCEPTS ==",
    );
    let err = parse_report(&text).unwrap_err();
    assert_eq!(err.code, IssueCode::DuplicateSection);
    assert_eq!(err.location, text.rfind("== REASONING ==").unwrap());
}

#[test]
fn unknown_severity_strict_and_lenient() {
    let text = WELL_FORMED.replace("moderate", "catastrophic");
    let err = parse_report(&text).unwrap_err();
    assert_eq!(err.code, IssueCode::UnknownSeverity);
    assert_eq!(err.location, text.find("catastrophic").unwrap());

    let parsed = parse_report_with(&text, ParseOptions { lenient_severity: true }).unwrap();
    assert_eq!(parsed.report.severity, Severity::Unspecified);
    assert_eq!(parsed.issues.len(), 1);
    assert_eq!(parsed.issues[0].code, IssueCode::UnknownSeverity);
}

#[test]
fn crlf_and_case_are_tolerated() {
    let text = WELL_FORMED.replace('\n', "\r\n").replace("moderate", "MODERATE");
    let (_, report) = parse_report(&text).unwrap();
    assert_eq!(report.severity, Severity::Moderate);
    assert_eq!(report.observed_concepts[1], "increased lung markings");
}

#[test]
fn step_block_is_parsed_in_order() {
    let text = format!(
        "[STEP 1: FINDINGS] x\n[STEP 2: PATHOPHYSIOLOGY]\ny\n[STEP 3: DIAGNOSIS]\nz\n[STEP 4: JUSTIFICATION]\nw\n\n{WELL_FORMED}"
    );
    let (trace, _) = parse_report(&text).unwrap();
    assert!(trace.present);
    assert_eq!(trace.findings_text, "x");
    assert_eq!(trace.justification_text, "w");
}

#[test]
fn out_of_order_steps_are_rejected() {
    let text = format!(
        "[STEP 2: PATHOPHYSIOLOGY]\ny\n[STEP 1: FINDINGS]\nx\n[STEP 3: DIAGNOSIS]\nz\n[STEP 4: JUSTIFICATION]\nw\n{WELL_FORMED}"
    );
    let err = parse_report(&text).unwrap_err();
    assert_eq!(err.code, IssueCode::MissingSection);
    assert_eq!(err.detail, "STEP 1: FINDINGS");
    assert_eq!(err.location, 0);
}

#[test]
fn empty_step_is_rejected() {
    let text = format!(
        "[STEP 1: FINDINGS]\n\n[STEP 2: PATHOPHYSIOLOGY]\ny\n[STEP 3: DIAGNOSIS]\nz\n[STEP 4: JUSTIFICATION]\nw\n{WELL_FORMED}"
    );
    assert_eq!(parse_report(&text).unwrap_err().code, IssueCode::EmptySection);
}

#[test]
fn free_text_diagnosis_is_kept() {
    let text = WELL_FORMED.replace("Pneumonia", "Pleural effusion");
    let (_, report) = parse_report(&text).unwrap();
    assert_eq!(
        report.primary_diagnosis,
        Diagnosis::Unrecognized("Pleural effusion".into())
    );
    let issues = validate(&report, &Vocabulary::default());
    assert!(issues.iter().any(|i| i.code == IssueCode::UnrecognizedDiagnosis));
}

#[test]
fn validate_flags_unknown_concepts_and_empty_sections() {
    let mut report = sample_report();
    assert!(validate(&report, &Vocabulary::default()).is_empty());
    report.observed_concepts.push("florid example text".into());
    report.recommendations.clear();
    let codes: Vec<_> = validate(&report, &Vocabulary::default())
        .into_iter()
        .map(|i| i.code)
        .collect();
    assert_eq!(
        codes,
        [IssueCode::ConceptNotInVocabulary, IssueCode::EmptySection]
    );
}

#[test]
fn canonical_round_trip() {
    for trace in [sample_trace(), CoTTrace::absent()] {
        let text = serialize(&sample_report(), &trace, Format::CanonicalText);
        assert_eq!(parse_report(&text).unwrap(), (trace, sample_report()));
    }
    let mut empty = sample_report();
    empty.observed_concepts.clear();
    let text = serialize(&empty, &CoTTrace::absent(), Format::CanonicalText);
    assert_eq!(parse_report(&text).unwrap().1, empty);
}

#[test]
fn json_has_stable_keys() {
    let json = serialize(&sample_report(), &CoTTrace::absent(), Format::Json);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["observed_concepts"].as_array().unwrap().len(), 2);
    assert!(v.get("cot_trace").is_none());
    assert_eq!(v["recognized"], true);
    let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
    let mut expected = vec![
        "primary_diagnosis",
        "recognized",
        "reasoning",
        "observed_concepts",
        "severity",
        "recommendations",
    ];
    expected.sort();
    assert_eq!(keys, expected);
    let doc: ReportDocument = serde_json::from_str(&json).unwrap();
    assert_eq!(doc.into_parts().unwrap().1, sample_report());

    let with_trace = serialize(&sample_report(), &sample_trace(), Format::Json);
    let v: serde_json::Value = serde_json::from_str(&with_trace).unwrap();
    let trace_keys: Vec<_> = v["cot_trace"].as_object().unwrap().keys().cloned().collect();
    assert_eq!(trace_keys, ["diagnosis", "findings", "justification", "pathophysiology"]);
    let doc: ReportDocument = serde_json::from_str(&with_trace).unwrap();
    assert_eq!(doc.into_parts().unwrap(), (sample_trace(), sample_report()));
}

#[test]
fn markdown_has_section_headings() {
    let md = serialize(&sample_report(), &sample_trace(), Format::Markdown);
    for heading in [
        "## Primary Diagnosis",
        "## Reasoning",
        "## Visual Concepts",
        "## Severity",
        "## Recommendations",
        "### Step 1: Findings",
        "### Step 4: Justification",
    ] {
        assert!(md.contains(heading), "{heading}");
    }
    let bare = serialize(&sample_report(), &CoTTrace::absent(), Format::Markdown);
    assert!(!bare.contains("## Reasoning Trace"));
}

proptest! {
    #[test]
    fn parser_is_total_on_arbitrary_text(s in ".{0,400}") {
        let _ = parse_report_with(&s, ParseOptions { lenient_severity: true });
    }

    #[test]
    fn errors_point_inside_input(lines in proptest::collection::vec(
        prop_oneof![
            Just("== PRIMARY DIAGNOSIS ==".to_string()),
            Just("== REASONING ==".to_string()),
            Just("== VISUAL CONCEPTS ==".to_string()),
            Just("== SEVERITY ==".to_string()),
            Just("== RECOMMENDATIONS ==".to_string()),
            Just("[STEP 1: FINDINGS]".to_string()),
            Just("- increased lung markings".to_string()),
            "[a-z ]{0,12}",
        ],
        0..16,
    )) {
        let text = lines.join("\n");
        if let Err(e) = parse_report(&text) {
            prop_assert!(e.location <= text.len());
            prop_assert!(text.is_char_boundary(e.location));
        }
    }
}
