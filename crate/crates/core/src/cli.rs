//! `xraycot` command line: config loading, artifact layout and exit codes.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 report validation issues.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::backend::BackendError;
use crate::concepts::{
    build_prototypes, calibrate_thresholds, train_mlc, MlcHead, PrototypeSet, TrainReport,
};
use crate::config::RunConfig;
use crate::dataset::{generate_dataset, load_manifest, read_pgm, Sample, Split};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::eval::{
    ablation_sweep, evaluate_run, recognizer_comparison, render_table, EvaluationRun, RunAborted,
    SweepRow, RunOptions,
};
use crate::pipeline::{Pipeline, Recognizer, RecognizerKind, SampleOutcome};
use crate::report::{serialize, Format, ReportDocument};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "xraycot", version, about = "Concept-grounded chest image diagnosis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a config leaf, e.g. `--set dataset.noise_sigma=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; replaces `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    GenData(Common),
    /// Fit the MLC head and build and calibrate zero-shot prototypes.
    Train(Common),
    /// Run the full pipeline on one PGM image.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        image: PathBuf,
    },
    /// Evaluate the configured pipeline on the test split.
    Evaluate(Common),
    /// Evaluate every ablation preset on the test split.
    Ablate(Common),
    /// Compare the zero-shot and MLC recognizers on the test split.
    Compare(Common),
}

/// Map an error to its exit code.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Backend(BackendError::Config(_)) => EXIT_CONFIG,
        Error::Report(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

/// Parse arguments and run one command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = RunConfig::load(&common.config, &common.overrides)?;
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::GenData(c) => cmd_gen_data(&load_config(&c)?),
        Command::Train(c) => cmd_train(&load_config(&c)?),
        Command::Diagnose { common, image } => cmd_diagnose(&load_config(&common)?, &image),
        Command::Evaluate(c) => cmd_evaluate(&load_config(&c)?),
        Command::Ablate(c) => cmd_ablate(&load_config(&c)?),
        Command::Compare(c) => cmd_compare(&load_config(&c)?),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(&item)?);
        text.push('\n');
    }
    write_file(path, &text)
}

pub fn cmd_gen_data(config: &RunConfig) -> Result<i32> {
    let dir = config.dataset_dir();
    let manifest = generate_dataset(&config.gen_config(), &dir)?;
    println!(
        "wrote {} samples to {}",
        manifest.entries.len(),
        config.manifest_path().display()
    );
    Ok(EXIT_OK)
}

fn split_samples(config: &RunConfig, split: Split) -> Result<Vec<Sample>> {
    let samples: Vec<Sample> = load_manifest(&config.manifest_path())?
        .into_iter()
        .filter(|s| s.split == split)
        .collect();
    if samples.is_empty() {
        return Err(Error::MissingSplit(split.as_str()));
    }
    Ok(samples)
}

#[derive(Serialize)]
struct TrainingSummary<'a> {
    config_fingerprint: String,
    encoder_tag: &'a str,
    n_train: usize,
    n_calib: usize,
    initial_loss: f64,
    final_loss: f64,
    losses: &'a [f64],
    thresholds: Vec<(String, f64)>,
    calibration_warnings: &'a [String],
}

pub fn cmd_train(config: &RunConfig) -> Result<i32> {
    let train = split_samples(config, Split::Train)?;
    let calib = split_samples(config, Split::Calib)?;
    let encoder = config.build_encoder();
    let fingerprint = config.fingerprint();

    let features = train
        .iter()
        .map(|s| encoder.encode(&s.image))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<_> = train.iter().map(|s| s.gold_concepts).collect();
    let (mut head, report): (MlcHead, TrainReport) =
        train_mlc(&features, &labels, &config.mlc_hyper())?;
    head.config_hash = fingerprint.clone();

    let d = &config.dataset;
    let raw = build_prototypes(
        encoder.as_ref(),
        config.recognizer.exemplars_per_concept,
        config.prototype_seed(),
        d.width,
        d.height,
    )?;
    let (mut prototypes, calibration) = calibrate_thresholds(&raw, &calib, encoder.as_ref())?;
    prototypes.config_hash = fingerprint.clone();

    let artifacts = config.artifacts_dir();
    create_dir(&artifacts)?;
    for path in [config.mlc_head_path(), config.prototypes_path()] {
        if let Some(parent) = path.parent() {
            create_dir(parent)?;
        }
    }
    head.save(&config.mlc_head_path())?;
    prototypes.save(&config.prototypes_path())?;

    let thresholds: Vec<_> = prototypes
        .concepts
        .iter()
        .zip(&prototypes.thresholds)
        .map(|(c, t)| (c.as_str().to_string(), *t))
        .collect();
    write_json(
        &artifacts.join("training.json"),
        &TrainingSummary {
            config_fingerprint: fingerprint,
            encoder_tag: encoder.tag(),
            n_train: train.len(),
            n_calib: calib.len(),
            initial_loss: report.initial_loss(),
            final_loss: report.final_loss(),
            losses: &report.losses,
            thresholds: thresholds.clone(),
            calibration_warnings: &calibration.warnings,
        },
    )?;

    println!(
        "mlc: {} epochs, loss {:.6} -> {:.6}",
        report.losses.len().saturating_sub(1),
        report.initial_loss(),
        report.final_loss()
    );
    println!("zero-shot thresholds:");
    for (name, t) in &thresholds {
        println!("  {name}: {t:.6}");
    }
    for w in &calibration.warnings {
        eprintln!("warning: {w}");
    }
    println!("artifacts in {}", artifacts.display());
    Ok(EXIT_OK)
}

struct Artifacts {
    head: Option<MlcHead>,
    prototypes: PrototypeSet,
}

fn load_artifacts(config: &RunConfig, encoder: &dyn Encoder, need_head: bool) -> Result<Artifacts> {
    let prototypes = PrototypeSet::load(&config.prototypes_path(), encoder.tag())?;
    let head = if need_head {
        Some(MlcHead::load(&config.mlc_head_path(), encoder.tag())?)
    } else {
        None
    };
    Ok(Artifacts { head, prototypes })
}

fn build_pipeline(config: &RunConfig, need_head: bool) -> Result<(Pipeline, Artifacts)> {
    let encoder: Arc<dyn Encoder> = Arc::from(config.build_encoder());
    let variant = config.recognizer.variant;
    let artifacts = load_artifacts(
        config,
        encoder.as_ref(),
        need_head || variant == RecognizerKind::Mlc,
    )?;
    let recognizer = match variant {
        RecognizerKind::Mlc => Recognizer::Mlc(artifacts.head.clone().expect("head loaded")),
        RecognizerKind::ZeroShot => Recognizer::ZeroShot(artifacts.prototypes.clone()),
        RecognizerKind::Oracle => Recognizer::Oracle,
    };
    let backend = Arc::from(config.build_backend()?);
    let mut pipeline = Pipeline::new(
        encoder,
        recognizer,
        artifacts.prototypes.clone(),
        config.align_seed(),
        config.align.d_a,
        backend,
    )
    .with_ablation(config.ablation()?);
    pipeline.vocabulary = config.vocabulary()?;
    pipeline.templates = config.templates()?;
    pipeline.include_digest = config.prompt.include_digest;
    if let Some(lenient) = config.report.lenient_severity {
        pipeline.lenient_severity = lenient;
    }
    Ok((pipeline, artifacts))
}

pub fn cmd_diagnose(config: &RunConfig, image_path: &Path) -> Result<i32> {
    if config.recognizer.variant == RecognizerKind::Oracle {
        return Err(Error::Config(
            "the oracle recognizer needs gold concepts and cannot diagnose a bare image".into(),
        ));
    }
    let (pipeline, _) = build_pipeline(config, false)?;
    let image = read_pgm(image_path)?;
    let sample_id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let d = pipeline.diagnose(&sample_id, &image, None)?;

    let out = config.output_dir.join("diagnose");
    create_dir(&out)?;
    match &d.parsed {
        Ok(p) => {
            let text = serialize(&p.report, &p.trace, Format::CanonicalText);
            write_file(&out.join("report.txt"), &text)?;
            write_json(&out.join("report.json"), &ReportDocument::new(&p.report, &p.trace))?;
            print!("{text}");
            println!();
            print!("{}", serialize(&p.report, &p.trace, Format::Markdown));
        }
        Err(_) => {
            write_file(&out.join("report.txt"), &d.completion.text)?;
            print!("{}", d.completion.text);
        }
    }
    if d.issues.is_empty() {
        return Ok(EXIT_OK);
    }
    for issue in &d.issues {
        eprintln!("issue: {issue}");
    }
    Ok(EXIT_VALIDATION)
}

fn run_options(config: &RunConfig) -> RunOptions {
    RunOptions {
        parallelism: config.backend.parallelism,
        config_fingerprint: config.fingerprint(),
    }
}

/// Keep whatever finished before the failure, then surface the error.
fn preserve_partial(out: &Path, aborted: RunAborted) -> Error {
    let path = out.join("per_sample.partial.jsonl");
    match write_jsonl(&path, &aborted.completed) {
        Ok(()) => eprintln!(
            "{} completed sample(s) saved to {}",
            aborted.completed.len(),
            path.display()
        ),
        Err(e) => eprintln!("could not save partial results: {e}"),
    }
    aborted.error
}

fn variant_label(kind: RecognizerKind) -> &'static str {
    match kind {
        RecognizerKind::Mlc => crate::eval::MLC_CONCEPTS,
        RecognizerKind::ZeroShot => crate::eval::LVLM_CONCEPTS,
        RecognizerKind::Oracle => "Oracle-Concepts",
    }
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<i32> {
    let samples = split_samples(config, Split::Test)?;
    let (pipeline, _) = build_pipeline(config, false)?;
    let out = config.output_dir.join("evaluate");
    create_dir(&out)?;
    let run: EvaluationRun = evaluate_run(&samples, &pipeline, &run_options(config))
        .map_err(|a| preserve_partial(&out, a))?;
    let table = render_table(&[(variant_label(config.recognizer.variant), &run.metrics)]);
    write_json(&out.join("metrics.json"), &run.metrics)?;
    write_file(&out.join("table.txt"), &table)?;
    write_jsonl(&out.join("per_sample.jsonl"), &run.outcomes)?;
    print!("{table}");
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct NamedMetrics<'a> {
    method: &'a str,
    metrics: &'a crate::eval::MetricsReport,
}

#[derive(Serialize)]
struct NamedOutcome<'a> {
    method: &'a str,
    outcome: &'a SampleOutcome,
}

fn write_sweep(out: &Path, rows: &[SweepRow]) -> Result<String> {
    let table = render_table(
        &rows
            .iter()
            .map(|r| (r.name.as_str(), &r.run.metrics))
            .collect::<Vec<_>>(),
    );
    let named: Vec<_> = rows
        .iter()
        .map(|r| NamedMetrics {
            method: &r.name,
            metrics: &r.run.metrics,
        })
        .collect();
    write_json(&out.join("metrics.json"), &named)?;
    write_file(&out.join("table.txt"), &table)?;
    write_jsonl(
        &out.join("per_sample.jsonl"),
        rows.iter().flat_map(|r| {
            r.run.outcomes.iter().map(|o| NamedOutcome {
                method: &r.name,
                outcome: o,
            })
        }),
    )?;
    Ok(table)
}

pub fn cmd_ablate(config: &RunConfig) -> Result<i32> {
    let samples = split_samples(config, Split::Test)?;
    let (pipeline, _) = build_pipeline(config, false)?;
    let out = config.output_dir.join("ablate");
    create_dir(&out)?;
    let rows = ablation_sweep(&samples, &pipeline, &run_options(config))
        .map_err(|a| preserve_partial(&out, a))?;
    print!("{}", write_sweep(&out, &rows)?);
    Ok(EXIT_OK)
}

pub fn cmd_compare(config: &RunConfig) -> Result<i32> {
    let samples = split_samples(config, Split::Test)?;
    let (pipeline, artifacts) = build_pipeline(config, true)?;
    let head = artifacts.head.expect("head loaded");
    let out = config.output_dir.join("compare");
    create_dir(&out)?;
    let rows = recognizer_comparison(
        &samples,
        &pipeline,
        &head,
        &artifacts.prototypes,
        &run_options(config),
    )
    .map_err(|a| preserve_partial(&out, a))?;
    print!("{}", write_sweep(&out, &rows)?);
    Ok(EXIT_OK)
}
