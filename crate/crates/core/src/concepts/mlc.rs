//! Multi-label logistic head trained by full-batch gradient descent on
//! binary cross-entropy with an L2 penalty on the weights.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{select_findings, ConceptFinding, Vocabulary};
use crate::dataset::{ConceptId, ConceptSet};
use crate::encoder::VisualEmbedding;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const BCE_EPS: f64 = 1e-12;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean over entries of `-[y ln p + (1-y) ln(1-p)]`, with `p` clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce_loss(probabilities: &[f64], labels: &[f64]) -> Result<f64> {
    if probabilities.len() != labels.len() {
        return Err(Error::Dimension {
            expected: probabilities.len(),
            actual: labels.len(),
        });
    }
    if probabilities.is_empty() {
        return Err(Error::EmptyInput("bce_loss"));
    }
    let total: f64 = probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / probabilities.len() as f64)
}

/// Training objective: mean per-sample BCE (itself a mean over concepts)
/// plus `l2 / 2 * ||W||^2`. Biases are not penalized.
pub fn mlc_objective(
    weights: &Array2<f64>,
    biases: &Array1<f64>,
    features: &Array2<f64>,
    labels: &Array2<f64>,
    l2: f64,
) -> f64 {
    let probs = (features.dot(&weights.t()) + biases).mapv(sigmoid);
    let n = features.nrows() as f64;
    let data: f64 = probs
        .rows()
        .into_iter()
        .zip(labels.rows())
        .map(|(p, y)| bce_loss(p.as_slice().unwrap(), &y.to_vec()).unwrap())
        .sum::<f64>()
        / n;
    data + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`mlc_objective`] with respect to `(weights, biases)`.
pub fn mlc_gradient(
    weights: &Array2<f64>,
    biases: &Array1<f64>,
    features: &Array2<f64>,
    labels: &Array2<f64>,
    l2: f64,
) -> (Array2<f64>, Array1<f64>) {
    let probs = (features.dot(&weights.t()) + biases).mapv(sigmoid);
    let scale = 1.0 / (features.nrows() * labels.ncols()) as f64;
    let residual = (probs - labels) * scale;
    let grad_w = residual.t().dot(features) + weights * l2;
    let grad_b = residual.sum_axis(Axis(0));
    (grad_w, grad_b)
}

/// Per-dimension z-scoring fitted on the training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &Array2<f64>) -> Self {
        let n = rows.nrows() as f64;
        let mean: Vec<f64> = rows.mean_axis(Axis(0)).unwrap().to_vec();
        let scale = rows
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(col, m)| {
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlcHyper {
    #[serde(default = "MlcHyper::default_lr")]
    pub lr: f64,
    #[serde(default = "MlcHyper::default_epochs")]
    pub epochs: usize,
    #[serde(default = "MlcHyper::default_l2")]
    pub l2: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "MlcHyper::default_threshold")]
    pub threshold: f64,
}

impl MlcHyper {
    fn default_lr() -> f64 {
        0.1
    }
    fn default_epochs() -> usize {
        500
    }
    fn default_l2() -> f64 {
        1e-4
    }
    fn default_threshold() -> f64 {
        0.5
    }
}

impl Default for MlcHyper {
    fn default() -> Self {
        Self {
            lr: Self::default_lr(),
            epochs: Self::default_epochs(),
            l2: Self::default_l2(),
            seed: 0,
            threshold: Self::default_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// `losses[0]` is the objective at initialization, `losses[t]` after `t` updates.
    pub losses: Vec<f64>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlcHead {
    pub concepts: Vec<ConceptId>,
    /// `K x D_v`, one row per concept.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub threshold: f64,
    pub standardizer: Standardizer,
    pub trained_on: String,
    pub config_hash: String,
}

fn stack(features: &[VisualEmbedding]) -> Result<Array2<f64>> {
    let d = features[0].dim();
    let mut out = Array2::zeros((features.len(), d));
    for (i, f) in features.iter().enumerate() {
        if f.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: f.dim(),
            });
        }
        if f.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training features"));
        }
        out.row_mut(i).assign(&Array1::from(f.values.clone()));
    }
    Ok(out)
}

fn hyper_hash(tag: &str, hyper: &MlcHyper) -> String {
    let key = format!(
        "mlc:{tag}:lr={}:epochs={}:l2={}:seed={}:threshold={}",
        hyper.lr, hyper.epochs, hyper.l2, hyper.seed, hyper.threshold
    );
    hex::encode(Sha256::digest(key.as_bytes()))[..16].to_string()
}

pub fn train_mlc(
    features: &[VisualEmbedding],
    labels: &[ConceptSet],
    hyper: &MlcHyper,
) -> Result<(MlcHead, TrainReport)> {
    if features.is_empty() {
        return Err(Error::EmptyInput("MLC training set"));
    }
    if features.len() != labels.len() {
        return Err(Error::Dimension {
            expected: features.len(),
            actual: labels.len(),
        });
    }
    if !(hyper.threshold > 0.0 && hyper.threshold < 1.0) {
        return Err(Error::Config(format!(
            "MLC threshold must lie in (0, 1), got {}",
            hyper.threshold
        )));
    }
    let tag = features[0].encoder_tag.clone();
    let raw = stack(features)?;
    let standardizer = Standardizer::fit(&raw);
    let mut x = raw;
    for mut row in x.rows_mut() {
        let z = standardizer.apply(row.as_slice().unwrap());
        row.assign(&Array1::from(z));
    }
    let k = ConceptId::COUNT;
    let y = Array2::from_shape_fn((labels.len(), k), |(i, j)| labels[i].indicator()[j]);

    let mut rng = SplitMix64::for_purpose(hyper.seed, "mlc-init");
    let mut w = Array2::from_shape_simple_fn((k, x.ncols()), || rng.uniform(-0.01, 0.01));
    let mut b = Array1::zeros(k);
    let mut losses = Vec::with_capacity(hyper.epochs + 1);
    losses.push(mlc_objective(&w, &b, &x, &y, hyper.l2));
    for _ in 0..hyper.epochs {
        let (gw, gb) = mlc_gradient(&w, &b, &x, &y, hyper.l2);
        w.scaled_add(-hyper.lr, &gw);
        b.scaled_add(-hyper.lr, &gb);
        losses.push(mlc_objective(&w, &b, &x, &y, hyper.l2));
    }
    let head = MlcHead {
        concepts: ConceptId::ALL.to_vec(),
        weights: w.rows().into_iter().map(|r| r.to_vec()).collect(),
        biases: b.to_vec(),
        threshold: hyper.threshold,
        standardizer,
        config_hash: hyper_hash(&tag, hyper),
        trained_on: tag,
    };
    Ok((head, TrainReport { losses }))
}

impl MlcHead {
    pub fn dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    /// Sigmoid score per concept, clamped into `(0, 1)`.
    pub fn scores(&self, embedding: &VisualEmbedding) -> Result<Vec<f64>> {
        if embedding.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: embedding.dim(),
            });
        }
        let z = self.standardizer.apply(&embedding.values);
        let scores: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| {
                let logit = row.iter().zip(&z).map(|(w, x)| w * x).sum::<f64>() + b;
                sigmoid(logit).clamp(BCE_EPS, 1.0 - BCE_EPS)
            })
            .collect();
        debug_assert!(scores.iter().all(|s| *s > 0.0 && *s < 1.0));
        Ok(scores)
    }

    pub fn predict(
        &self,
        embedding: &VisualEmbedding,
        vocabulary: &Vocabulary,
    ) -> Result<Vec<ConceptFinding>> {
        let scores = self.scores(embedding)?;
        Ok(select_findings(&scores, |_| self.threshold, vocabulary))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Load a head and check it was trained on `expected_tag`'s features.
    pub fn load(path: &Path, expected_tag: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let head: MlcHead = serde_json::from_str(&text)?;
        if head.trained_on != expected_tag {
            return Err(Error::EncoderMismatch {
                expected: expected_tag.to_string(),
                found: head.trained_on,
            });
        }
        if head.concepts != ConceptId::ALL
            || head.weights.len() != ConceptId::COUNT
            || head.biases.len() != ConceptId::COUNT
            || head.weights.iter().any(|r| r.len() != head.dim())
            || head.standardizer.scale.len() != head.dim()
        {
            return Err(Error::Config(format!(
                "{} is not a consistent MLC head",
                path.display()
            )));
        }
        Ok(head)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_head(d: usize, bias: f64) -> MlcHead {
        MlcHead {
            concepts: ConceptId::ALL.to_vec(),
            weights: vec![vec![0.0; d]; 8],
            biases: vec![bias; 8],
            threshold: 0.5,
            standardizer: Standardizer {
                mean: vec![0.0; d],
                scale: vec![1.0; d],
            },
            trained_on: "t".into(),
            config_hash: String::new(),
        }
    }

    #[test]
    fn bce_reference_values() {
        let y = [1.0, 0.0, 1.0, 0.0];
        let perfect = bce_loss(&y, &y).unwrap();
        assert!(perfect <= 1.1e-12, "{perfect}");
        let half = bce_loss(&[0.5; 4], &y).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);

        let p: [f64; 8] = [0.9, 0.1, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
        let y = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut oracle = 0.0;
        for i in 0..8 {
            let term = if y[i] == 1.0 { -p[i].ln() } else { -(1.0 - p[i]).ln() };
            oracle += term;
        }
        oracle /= 8.0;
        assert!((bce_loss(&p, &y).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn bce_dimension_mismatch() {
        assert!(bce_loss(&[0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn zero_head_ties_resolve_to_detected() {
        let head = zero_head(4, 0.0);
        let emb = VisualEmbedding::new(vec![1.0, -2.0, 3.0, 0.5], "t").unwrap();
        let scores = head.scores(&emb).unwrap();
        assert!(scores.iter().all(|&s| s == 0.5));
        assert_eq!(head.predict(&emb, &Vocabulary::default()).unwrap().len(), 8);
    }

    #[test]
    fn negative_bias_detects_nothing() {
        let head = zero_head(4, -10.0);
        let emb = VisualEmbedding::new(vec![0.0; 4], "t").unwrap();
        assert!(head.predict(&emb, &Vocabulary::default()).unwrap().is_empty());
    }

    #[test]
    fn predict_checks_dimensions() {
        let head = zero_head(4, 0.0);
        let emb = VisualEmbedding::new(vec![0.0; 5], "t").unwrap();
        assert!(matches!(head.scores(&emb), Err(Error::Dimension { .. })));
    }

    #[test]
    fn all_zero_labels_push_probabilities_down() {
        let mut rng = SplitMix64::new(5);
        let feats: Vec<_> = (0..30)
            .map(|_| VisualEmbedding::new((0..6).map(|_| rng.uniform(0.0, 10.0)).collect(), "t").unwrap())
            .collect();
        let labels = vec![ConceptSet::EMPTY; 30];
        let (head, report) = train_mlc(&feats, &labels, &MlcHyper::default()).unwrap();
        assert!(report.final_loss() < report.initial_loss());
        for f in &feats {
            assert!(head.scores(f).unwrap().iter().all(|&s| s < 0.5));
        }
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert!(matches!(
            train_mlc(&[], &[], &MlcHyper::default()),
            Err(Error::EmptyInput(_))
        ));
        let bad = VisualEmbedding {
            values: vec![f64::NAN],
            encoder_tag: "t".into(),
        };
        assert!(matches!(
            train_mlc(&[bad], &[ConceptSet::EMPTY], &MlcHyper::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn save_load_preserves_standardizer_and_checks_encoder() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = SplitMix64::new(1);
        let feats: Vec<_> = (0..10)
            .map(|_| VisualEmbedding::new((0..3).map(|_| rng.uniform(-5.0, 5.0)).collect(), "enc-a").unwrap())
            .collect();
        let labels: Vec<_> = (0..10).map(|i| ConceptSet::from_bits(i as u8)).collect();
        let hyper = MlcHyper {
            epochs: 20,
            ..MlcHyper::default()
        };
        let (head, _) = train_mlc(&feats, &labels, &hyper).unwrap();
        let path = dir.path().join("head.json");
        head.save(&path).unwrap();
        let back = MlcHead::load(&path, "enc-a").unwrap();
        assert_eq!(back, head);
        for f in &feats {
            assert_eq!(back.scores(f).unwrap(), head.scores(f).unwrap());
        }
        assert!(matches!(
            MlcHead::load(&path, "enc-b"),
            Err(Error::EncoderMismatch { .. })
        ));
    }
}
