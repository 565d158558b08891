//! Talk to a chat-completion endpoint. Without arguments a local stub stands
//! in for the server and fails once with 429 to show the retry.
//!
//! `cargo run --example remote_backend [base_url model]`
//! (set XRAYCOT_API_KEY to send a bearer token)

use xraycot::backend::stub::{StubResponse, StubServer};
use xraycot::backend::{Backend, BackendConfig, RemoteBackend};
use xraycot::concepts::{ConceptFinding, Vocabulary};
use xraycot::cot::{ablation_preset, assemble_prompt, render_messages, PromptTemplates};
use xraycot::dataset::ConceptId;
use xraycot::report::parse_report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let canned = "== PRIMARY DIAGNOSIS ==\ncardiomegaly\n\n== REASONING ==\nEnlarged silhouette.\n\n\
                  == VISUAL CONCEPTS ==\n- cardiomegaly, with increased cardiothoracic ratio\n\n\
                  == SEVERITY ==\nmild\n\n== RECOMMENDATIONS ==\nEchocardiography.\n";
    let stub;
    let (url, model) = match args.as_slice() {
        [url, model] => (url.clone(), model.clone()),
        _ => {
            stub = StubServer::start(vec![StubResponse::new(429, "{}"), StubResponse::chat(canned)])?;
            (stub.base_url(), "stub".to_string())
        }
    };
    let mut config = BackendConfig::remote(url, model);
    config.backoff_base_ms = 50;
    let backend = RemoteBackend::from_env(config, 1)?;

    let vocab = Vocabulary::default();
    let c = ConceptId::EnlargedCardiacSilhouette;
    let findings = [ConceptFinding { concept: c, score: 0.97, description: vocab.describe(c).to_string() }];
    let templates = PromptTemplates::default();
    let ablation = ablation_preset("w/o F_img").unwrap();
    let bundle = assemble_prompt(&findings, None, ablation, &templates, false)?;
    let request = render_messages(&bundle, &templates.cot(), ablation).with_metadata("demo", backend.tag());

    let done = backend.generate(&request)?;
    println!("{} attempt(s), {} ms", done.attempts, done.latency_ms);
    match parse_report(&done.text) {
        Ok((_, report)) => println!("diagnosis: {:?}", report.primary_diagnosis),
        Err(e) => println!("reply did not follow the report grammar: {e}"),
    }
    Ok(())
}
