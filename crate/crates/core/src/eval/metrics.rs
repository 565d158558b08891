//! Balanced accuracy and macro F1 for diagnoses and per-concept detection.

use serde::{Deserialize, Serialize};

use crate::dataset::ConceptId;
use crate::error::{Error, Result};

/// Gold rows by predicted columns, plus a trailing column for
/// predictions that could not be mapped to any class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `labels.len()` rows of `labels.len() + 1` counts.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n + 1]; n],
        }
    }

    /// Matrix over classes `0..n` from `(gold, predicted)` pairs; `None`
    /// lands in the invalid column.
    pub fn from_pairs(n: usize, pairs: &[(usize, Option<usize>)]) -> Self {
        let mut m = Self::new((0..n).map(|i| i.to_string()).collect());
        for &(g, p) in pairs {
            m.record(g, p);
        }
        m
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn record(&mut self, gold: usize, predicted: Option<usize>) {
        let col = predicted.unwrap_or(self.n_classes());
        self.counts[gold][col] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn gold_count(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted_count(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    pub fn invalid_count(&self) -> u64 {
        let n = self.n_classes();
        self.counts.iter().map(|r| r[n]).sum()
    }

    /// Recall per class; `None` for classes without gold instances.
    pub fn recalls(&self) -> Vec<Option<f64>> {
        (0..self.n_classes())
            .map(|c| {
                let g = self.gold_count(c);
                (g > 0).then(|| self.counts[c][c] as f64 / g as f64)
            })
            .collect()
    }

    /// One-vs-rest F1 per class; `None` for classes never seen in gold
    /// or predictions.
    pub fn f1_scores(&self) -> Vec<Option<f64>> {
        (0..self.n_classes())
            .map(|c| {
                let tp = self.counts[c][c];
                let gold = self.gold_count(c);
                let pred = self.predicted_count(c);
                (gold + pred > 0).then(|| f1(tp, pred - tp, gold - tp))
            })
            .collect()
    }
}

fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean recall over classes that have gold instances.
pub fn bacc_multiclass(counts: &ConfusionMatrix) -> Result<f64> {
    mean(counts.recalls().into_iter().flatten())
        .ok_or(Error::EmptyInput("confusion matrix has no gold instances"))
}

/// Macro one-vs-rest F1 over classes present in gold or predictions.
pub fn f1_macro_multiclass(counts: &ConfusionMatrix) -> Result<f64> {
    if counts.total() == 0 {
        return Err(Error::EmptyInput("confusion matrix is empty"));
    }
    Ok(mean(counts.f1_scores().into_iter().flatten()).unwrap_or(0.0))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl BinaryCounts {
    pub fn record(&mut self, predicted: bool, gold: bool) {
        match (predicted, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    /// `(sensitivity + specificity) / 2`, defined when both classes occur.
    pub fn bacc(&self) -> Option<f64> {
        let pos = self.tp + self.fn_;
        let neg = self.tn + self.fp;
        (pos > 0 && neg > 0)
            .then(|| (self.tp as f64 / pos as f64 + self.tn as f64 / neg as f64) / 2.0)
    }

    /// F1 of the positive class, undefined when it never occurs at all.
    pub fn f1(&self) -> Option<f64> {
        (self.tp + self.fn_ + self.fp > 0).then(|| f1(self.tp, self.fp, self.fn_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptScores {
    pub bacc: Option<f64>,
    pub f1_macro: Option<f64>,
    pub per_concept_bacc: Vec<Option<f64>>,
    pub per_concept_f1: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

/// Macro BACC and F1 over concepts; entries whose value is undefined are
/// left out of the average and noted in `warnings`.
pub fn concept_metrics(per_concept: &[BinaryCounts]) -> ConceptScores {
    let per_concept_bacc: Vec<_> = per_concept.iter().map(BinaryCounts::bacc).collect();
    let per_concept_f1: Vec<_> = per_concept.iter().map(BinaryCounts::f1).collect();
    let name = |k: usize| {
        ConceptId::from_index(k)
            .filter(|_| per_concept.len() == ConceptId::COUNT)
            .map_or_else(|| format!("concept {k}"), |c| c.to_string())
    };
    let mut warnings = Vec::new();
    for (k, c) in per_concept.iter().enumerate() {
        if c.tp + c.fn_ == 0 {
            warnings.push(format!("{}: no gold positives, excluded from BACC", name(k)));
        } else if c.tn + c.fp == 0 {
            warnings.push(format!("{}: no gold negatives, excluded from BACC", name(k)));
        }
    }
    ConceptScores {
        bacc: mean(per_concept_bacc.iter().flatten().copied()),
        f1_macro: mean(per_concept_f1.iter().flatten().copied()),
        per_concept_bacc,
        per_concept_f1,
        warnings,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub multiclass: ConfusionMatrix,
    pub per_concept: Vec<BinaryCounts>,
}
