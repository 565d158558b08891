use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.json")
}

fn xraycot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xraycot"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// gen-data and train into `dir` with the smoke config plus `extra` flags.
fn prepare(dir: &Path, extra: &[&str]) {
    let config = smoke_config();
    for cmd in ["gen-data", "train"] {
        let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = xraycot(&args);
        assert_eq!(code(&out), 0, "{cmd}: {}", stderr(&out));
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&xraycot(&[])), 2);
    assert_eq!(code(&xraycot(&["frobnicate"])), 2);
    assert_eq!(code(&xraycot(&["evaluate"])), 2, "missing --config");
    assert_eq!(code(&xraycot(&["--help"])), 0);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let config = smoke_config();
    let config = config.to_str().unwrap();

    let r = xraycot(&["gen-data", "--config", "/no/such/config.json", "--out", out]);
    assert_eq!(code(&r), 2);

    let r = xraycot(&[
        "gen-data",
        "--config",
        config,
        "--out",
        out,
        "--set",
        r#"dataset.n_per_split={"train":-1,"calib":0,"test":0}"#,
    ]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("invalid configuration"), "{}", stderr(&r));

    let r = xraycot(&["gen-data", "--config", config, "--out", out, "--set", "datasett.x=1"]);
    assert_eq!(code(&r), 2);
    let r = xraycot(&["gen-data", "--config", config, "--out", out, "--set", "ablation.preset=none"]);
    assert_eq!(code(&r), 2);
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let r = xraycot(&["gen-data", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&r), 2);
    assert!(!tmp.path().join("dataset").exists(), "nothing written on config error");
}

#[test]
fn gen_data_writes_manifest_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let config = smoke_config();
    let out = tmp.path().to_str().unwrap();
    let r = xraycot(&["gen-data", "--config", config.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&r), 0);
    let manifest = tmp.path().join("dataset/manifest.jsonl");
    assert!(stdout(&r).contains("manifest.jsonl"));
    let first = std::fs::read(&manifest).unwrap();
    assert_eq!(first.iter().filter(|b| **b == b'\n').count(), 80);
    let r = xraycot(&["gen-data", "--config", config.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&r), 0);
    assert_eq!(std::fs::read(&manifest).unwrap(), first);
}

#[test]
fn train_without_train_split_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let config = smoke_config();
    let out = tmp.path().to_str().unwrap();
    let no_train = r#"dataset.n_per_split={"train":0,"calib":4,"test":4}"#;
    let r = xraycot(&["gen-data", "--config", config.to_str().unwrap(), "--out", out, "--set", no_train]);
    assert_eq!(code(&r), 0);
    let r = xraycot(&["train", "--config", config.to_str().unwrap(), "--out", out, "--set", no_train]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("train"), "{}", stderr(&r));
}

#[test]
fn train_reports_decreasing_loss_on_clean_data() {
    let tmp = tempfile::tempdir().unwrap();
    prepare(tmp.path(), &["--set", "dataset.noise_sigma=0"]);
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("artifacts/training.json")).unwrap())
            .unwrap();
    assert!(summary["final_loss"].as_f64().unwrap() < summary["initial_loss"].as_f64().unwrap());
    assert_eq!(summary["thresholds"].as_array().unwrap().len(), 8);
    let head: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("artifacts/mlc_head.json")).unwrap())
            .unwrap();
    assert_eq!(head["config_hash"], summary["config_fingerprint"]);
}

fn first_image_with(dir: &Path, disease: &str) -> PathBuf {
    let manifest = std::fs::read_to_string(dir.join("dataset/manifest.jsonl")).unwrap();
    let line = manifest
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .find(|v| v["gold_disease"] == disease)
        .expect("disease present in smoke dataset");
    dir.join("dataset").join(line["image_path"].as_str().unwrap())
}

#[test]
fn diagnose_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    prepare(tmp.path(), &[]);
    let config = smoke_config();
    let config = config.to_str().unwrap();
    let out = tmp.path().to_str().unwrap();
    let chf = first_image_with(tmp.path(), "congestive_heart_failure");

    let r = xraycot(&["diagnose", "--config", config, "--out", out, "--image", chf.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = stdout(&r);
    let header = text.find("== PRIMARY DIAGNOSIS ==").expect("canonical text printed");
    assert!(text[header..].contains("congestive_heart_failure"));
    assert!(text.contains("# Diagnostic Report"), "markdown printed");
    let json: Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("diagnose/report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["primary_diagnosis"], "congestive_heart_failure");
    assert!(json["cot_trace"].is_object());
    assert!(tmp.path().join("diagnose/report.txt").exists());

    let r = xraycot(&[
        "diagnose", "--config", config, "--out", out, "--image", chf.to_str().unwrap(),
        "--set", "ablation.preset=w/o CoT",
    ]);
    assert_eq!(code(&r), 0);
    let json: Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("diagnose/report.json")).unwrap(),
    )
    .unwrap();
    assert!(json.get("cot_trace").is_none());

    let r = xraycot(&["diagnose", "--config", config, "--out", out, "--image", "/no/such.pgm"]);
    assert_eq!(code(&r), 1);
    let r = xraycot(&[
        "diagnose", "--config", config, "--out", out, "--image", chf.to_str().unwrap(),
        "--set", "recognizer.variant=oracle",
    ]);
    assert_eq!(code(&r), 2);
}

#[test]
fn diagnose_with_severity_outside_the_grammar_exits_3() {
    use xraycot::backend::stub::{StubResponse, StubServer};
    let tmp = tempfile::tempdir().unwrap();
    prepare(tmp.path(), &[]);
    let reply = "== PRIMARY DIAGNOSIS ==\nnormal\n\n== REASONING ==\nclear\n\n== VISUAL CONCEPTS ==\n\n\
                 == SEVERITY ==\ncritical\n\n== RECOMMENDATIONS ==\nnone\n";
    let server = StubServer::start(vec![StubResponse::chat(reply)]).unwrap();
    let config = smoke_config();
    let image = first_image_with(tmp.path(), "normal");
    let base = format!("backend.base_url={}", server.base_url());
    let r = xraycot(&[
        "diagnose", "--config", config.to_str().unwrap(), "--out", tmp.path().to_str().unwrap(),
        "--image", image.to_str().unwrap(),
        "--set", "backend.kind=remote", "--set", &base, "--set", "backend.model=stub",
        "--set", "report.lenient_severity=false",
    ]);
    assert_eq!(code(&r), 3, "{}", stderr(&r));
    assert!(stderr(&r).contains("issue"), "{}", stderr(&r));
}

#[test]
fn evaluate_ablate_compare_layout() {
    let tmp = tempfile::tempdir().unwrap();
    prepare(tmp.path(), &["--set", "recognizer.variant=oracle"]);
    let config = smoke_config();
    let config = config.to_str().unwrap();
    let out = tmp.path().to_str().unwrap();
    let oracle = ["--set", "recognizer.variant=oracle"];

    let mut args = vec!["evaluate", "--config", config, "--out", out];
    args.extend_from_slice(&oracle);
    let r = xraycot(&args);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let metrics: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("evaluate/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["diagnosis_bacc"], 1.0);
    assert_eq!(metrics["n_samples"], 24);
    let per_sample = std::fs::read_to_string(tmp.path().join("evaluate/per_sample.jsonl")).unwrap();
    assert_eq!(per_sample.lines().count(), 24);

    let data_rows = |table: &str| table.lines().skip(2).count();
    let r = xraycot(&["ablate", "--config", config, "--out", out]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let table = std::fs::read_to_string(tmp.path().join("ablate/table.txt")).unwrap();
    assert_eq!(data_rows(&table), 5);

    let r = xraycot(&["compare", "--config", config, "--out", out]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let table = std::fs::read_to_string(tmp.path().join("compare/table.txt")).unwrap();
    assert_eq!(data_rows(&table), 2);
    assert!(table.contains("LVLM-Concepts") && table.contains("MLC-Concepts"));
}

#[test]
fn evaluate_without_artifacts_fails_at_runtime() {
    let tmp = tempfile::tempdir().unwrap();
    let config = smoke_config();
    let out = tmp.path().to_str().unwrap();
    let r = xraycot(&["gen-data", "--config", config.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&r), 0);
    let r = xraycot(&["evaluate", "--config", config.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&r), 1);
}

#[test]
fn transport_failure_keeps_partial_results() {
    let tmp = tempfile::tempdir().unwrap();
    prepare(tmp.path(), &[]);
    let config = smoke_config();
    // Nothing listens on this port, so every attempt is a connection error.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("backend.base_url=http://{}", listener.local_addr().unwrap());
    drop(listener);
    let r = xraycot(&[
        "evaluate", "--config", config.to_str().unwrap(), "--out", tmp.path().to_str().unwrap(),
        "--set", "backend.kind=remote", "--set", &url, "--set", "backend.model=m",
        "--set", "backend.max_attempts=2", "--set", "backend.backoff_base_ms=1",
    ]);
    assert_eq!(code(&r), 1, "{}", stderr(&r));
    assert!(tmp.path().join("evaluate/per_sample.partial.jsonl").exists());
    assert!(!tmp.path().join("evaluate/metrics.json").exists());
}
