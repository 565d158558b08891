//! Parse a report, then show what strict and lenient parsing do with a
//! severity token outside the grammar. The second concept bullet is not
//! in the vocabulary, so validation flags it.

use xraycot::concepts::Vocabulary;
use xraycot::report::{parse_report_with, serialize, validate, Format, ParseOptions};

const REPORT: &str = "\
== PRIMARY DIAGNOSIS ==
pneumonia

== REASONING ==
A focal right lower lobe opacity is the dominant finding.

== VISUAL CONCEPTS ==
- detected lung opacities, located in the right lower lobe
- patchy haze

== SEVERITY ==
moderate

== RECOMMENDATIONS ==
Clinical correlation and follow-up radiograph.
";

fn main() {
    let strict = ParseOptions { lenient_severity: false };
    let parsed = parse_report_with(REPORT, strict).expect("well-formed");
    println!("diagnosis {:?}, severity {}", parsed.report.primary_diagnosis, parsed.report.severity);
    for issue in validate(&parsed.report, &Vocabulary::default()) {
        println!("validation: {issue}");
    }
    println!("{}", serialize(&parsed.report, &parsed.trace, Format::Json));

    let odd = REPORT.replace("moderate", "grave");
    println!("strict:  {:?}", parse_report_with(&odd, strict).map(|p| p.report.severity));
    let lenient = parse_report_with(&odd, ParseOptions { lenient_severity: true }).unwrap();
    println!("lenient: {} with issues {:?}", lenient.report.severity, lenient.issues);

    let truncated = &REPORT[..REPORT.find("== SEVERITY ==").unwrap()];
    println!("truncated: {}", parse_report_with(truncated, strict).unwrap_err());
}
