use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::backend::MockBackend;
use crate::concepts::{build_prototypes, MlcHead, MlcHyper, Standardizer};
use crate::cot::ablation_preset;
use crate::dataset::{generate_samples, ConceptSet, GenConfig, Split, SplitCounts};
use crate::encoder::{Encoder, RegionStatsEncoder};

fn test_samples(n: u32, sigma: f64, seed: u64) -> Vec<Sample> {
    let mut cfg = GenConfig::new(SplitCounts { train: 0, calib: 0, test: n }, seed);
    cfg.noise_sigma = sigma;
    generate_samples(&cfg).unwrap()
}

fn oracle_pipeline() -> Pipeline {
    let enc = RegionStatsEncoder::new();
    let protos = build_prototypes(&enc, 2, 1, 64, 64).unwrap();
    Pipeline::new(
        Arc::new(enc),
        Recognizer::Oracle,
        protos,
        3,
        32,
        Arc::new(MockBackend::default()),
    )
}

#[test]
fn oracle_concepts_give_perfect_diagnosis() {
    let samples = test_samples(60, 8.0, 5);
    let run = evaluate_run(&samples, &oracle_pipeline(), &RunOptions::default()).unwrap();
    assert_eq!(run.metrics.diagnosis_bacc, 1.0);
    assert_eq!(run.metrics.diagnosis_f1_macro, 1.0);
    assert_eq!(run.metrics.n_invalid, 0);
    assert_eq!(run.metrics.confusion.total(), 60);
    assert_eq!(run.outcomes.len(), 60);
}

#[test]
fn without_cvis_every_prediction_is_normal() {
    let samples = test_samples(40, 8.0, 6);
    let p = oracle_pipeline().with_ablation(ablation_preset("w/o C_vis").unwrap());
    let run = evaluate_run(&samples, &p, &RunOptions::default()).unwrap();
    assert!(run
        .outcomes
        .iter()
        .all(|o| o.predicted_disease == Some(DiseaseLabel::Normal)));
    // Only the normal class has non-zero recall, and it is exactly 1.
    let m = &run.metrics;
    let present = m.per_class.iter().filter(|c| c.gold > 0).count() as f64;
    assert!((m.diagnosis_bacc - 1.0 / present).abs() < 1e-12);
}

#[test]
fn empty_run_is_an_error() {
    let err = evaluate_run(&[], &oracle_pipeline(), &RunOptions::default()).unwrap_err();
    assert!(matches!(err.error, Error::EmptyInput(_)));
}

#[test]
fn parallel_and_serial_runs_agree() {
    let samples = test_samples(24, 8.0, 7);
    let p = oracle_pipeline();
    let serial = evaluate_run(&samples, &p, &RunOptions::default()).unwrap();
    let parallel = evaluate_run(
        &samples,
        &p,
        &RunOptions {
            parallelism: 4,
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert_eq!(serial.metrics, parallel.metrics);
    assert_eq!(serial.outcomes, parallel.outcomes);
}

#[test]
fn sweep_and_comparison_shapes() {
    let samples = test_samples(12, 0.0, 8);
    let base = oracle_pipeline();
    let rows = ablation_sweep(&samples, &base, &RunOptions::default()).unwrap();
    let names: Vec<_> = rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["full", "w/o CoT", "w/o C_vis", "w/o F_img", "w/o P_med"]);
    assert!(rows.iter().all(|r| r.run.metrics.n_samples == 12));

    let enc = RegionStatsEncoder::new();
    let feats: Vec<_> = samples.iter().map(|s| enc.encode(&s.image).unwrap()).collect();
    let labels: Vec<_> = samples.iter().map(|s| s.gold_concepts).collect();
    let hyper = MlcHyper {
        epochs: 20,
        ..MlcHyper::default()
    };
    let (head, _) = crate::concepts::train_mlc(&feats, &labels, &hyper).unwrap();
    let rows = recognizer_comparison(&samples, &base, &head, &base.prototypes, &RunOptions::default())
        .unwrap();
    assert_eq!(rows[0].name, LVLM_CONCEPTS);
    assert_eq!(rows[1].name, MLC_CONCEPTS);
    assert_eq!(
        rows[0].run.metrics.sample_fingerprint,
        rows[1].run.metrics.sample_fingerprint
    );
    let table = render_table(&[
        (rows[0].name.as_str(), &rows[0].run.metrics),
        (rows[1].name.as_str(), &rows[1].run.metrics),
    ]);
    assert_eq!(table.lines().count(), 4);
    assert!(table.lines().nth(2).unwrap().starts_with("LVLM-Concepts"));
}

fn outcome(gold: ConceptSet, pred: ConceptSet, id: usize, valid: bool) -> SampleOutcome {
    SampleOutcome {
        sample_id: format!("s{id}"),
        gold_concepts: gold,
        gold_disease: crate::dataset::disease_from_concepts(gold),
        predicted_concepts: pred,
        findings: vec![],
        predicted_disease: valid.then(|| crate::dataset::disease_from_concepts(pred)),
        report: None,
        issues: vec![],
        visual_proj: None,
        attempts: 1,
        raw_text: None,
    }
}

proptest! {
    #[test]
    fn metrics_are_permutation_invariant(
        pairs in proptest::collection::vec((0u8..=255, 0u8..=255, any::<bool>()), 1..40),
        seed in any::<u64>(),
    ) {
        let outcomes: Vec<_> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(g, p, v))| outcome(ConceptSet::from_bits(g), ConceptSet::from_bits(p), i, v))
            .collect();
        let mut shuffled = outcomes.clone();
        // Fisher-Yates with the crate PRNG.
        let mut rng = crate::rng::SplitMix64::new(seed);
        for i in (1..shuffled.len()).rev() {
            let j = rng.below(i as u64 + 1) as usize;
            shuffled.swap(i, j);
        }
        let a = metrics_from_outcomes(&outcomes, "f").unwrap();
        let b = metrics_from_outcomes(&shuffled, "f").unwrap();
        prop_assert_eq!(&a.confusion, &b.confusion);
        prop_assert_eq!(&a.per_concept, &b.per_concept);
        prop_assert!((a.diagnosis_bacc - b.diagnosis_bacc).abs() < 1e-12);
        prop_assert!((a.diagnosis_f1_macro - b.diagnosis_f1_macro).abs() < 1e-12);
        prop_assert_eq!(a.concept_bacc.map(|x| (x * 1e12).round()), b.concept_bacc.map(|x| (x * 1e12).round()));
        prop_assert_eq!(a.n_samples as u64, a.confusion.total());
    }

    #[test]
    fn scaling_scores_and_threshold_keeps_findings(
        logits in proptest::collection::vec(-6.0f64..6.0, 8),
        threshold in 0.05f64..0.95,
        alpha in 0.01f64..0.99,
    ) {
        // A head whose scores are the sigmoids of `logits` for a 1-dim input.
        let head = MlcHead {
            concepts: ConceptId::ALL.to_vec(),
            weights: vec![vec![0.0]; 8],
            biases: logits.clone(),
            threshold,
            standardizer: Standardizer { mean: vec![0.0], scale: vec![1.0] },
            trained_on: "t".into(),
            config_hash: String::new(),
        };
        let emb = crate::encoder::VisualEmbedding::new(vec![1.0], "t").unwrap();
        let scores = head.scores(&emb).unwrap();
        let detected: Vec<bool> = scores.iter().map(|s| *s >= threshold).collect();
        let scaled: Vec<bool> = scores.iter().map(|s| alpha * s >= alpha * threshold).collect();
        prop_assert_eq!(detected, scaled);
    }
}

#[test]
fn split_helper_only_emits_test() {
    assert!(test_samples(3, 0.0, 1).iter().all(|s| s.split == Split::Test));
}
