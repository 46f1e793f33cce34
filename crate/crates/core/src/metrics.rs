//! Accuracy and joint-correctness quadrants. This is the only module allowed
//! to read the hidden gold labels of the unlabeled pool.

use serde::{Deserialize, Serialize};

use crate::corpus::HiddenLabel;
use crate::error::{Error, Result};
use crate::neuralnet::Prediction;

/// Capability token for reading [`HiddenLabel`]s. It cannot be constructed
/// outside this module.
pub struct DiagnosticsAccess {
    _private: (),
}

const ACCESS: DiagnosticsAccess = DiagnosticsAccess { _private: () };

pub fn reveal_all(labels: &[HiddenLabel]) -> Vec<usize> {
    labels.iter().map(|l| l.reveal(&ACCESS)).collect()
}

pub fn accuracy(predictions: &[Prediction], gold: &[usize]) -> Result<f64> {
    let labels: Vec<usize> = predictions.iter().map(|p| p.label).collect();
    label_accuracy(&labels, gold)
}

pub fn label_accuracy(predicted: &[usize], gold: &[usize]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::LengthMismatch(predicted.len(), gold.len()));
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput("accuracy inputs"));
    }
    let correct = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / gold.len() as f64)
}

/// Joint correctness of (random-init, pretrained-init) predictions; `tf`
/// means the random side is right and the pretrained side wrong.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrantRatios {
    pub tt: f64,
    pub tf: f64,
    pub ft: f64,
    pub ff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrant {
    TT,
    TF,
    FT,
    FF,
}

impl Quadrant {
    pub fn of(rand_label: usize, emb_label: usize, gold: usize) -> Self {
        match (rand_label == gold, emb_label == gold) {
            (true, true) => Quadrant::TT,
            (true, false) => Quadrant::TF,
            (false, true) => Quadrant::FT,
            (false, false) => Quadrant::FF,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Quadrant::TT => "TT",
            Quadrant::TF => "TF",
            Quadrant::FT => "FT",
            Quadrant::FF => "FF",
        }
    }
}

pub fn quadrant_ratios(
    rand_labels: &[usize],
    emb_labels: &[usize],
    gold_labels: &[usize],
) -> Result<QuadrantRatios> {
    if rand_labels.len() != gold_labels.len() {
        return Err(Error::LengthMismatch(rand_labels.len(), gold_labels.len()));
    }
    if emb_labels.len() != gold_labels.len() {
        return Err(Error::LengthMismatch(emb_labels.len(), gold_labels.len()));
    }
    if gold_labels.is_empty() {
        return Err(Error::EmptyInput("quadrant inputs"));
    }
    let mut counts = [0usize; 4];
    for ((&r, &e), &g) in rand_labels.iter().zip(emb_labels).zip(gold_labels) {
        counts[Quadrant::of(r, e, g) as usize] += 1;
    }
    let n = gold_labels.len() as f64;
    Ok(QuadrantRatios {
        tt: counts[0] as f64 / n,
        tf: counts[1] as f64 / n,
        ft: counts[2] as f64 / n,
        ff: counts[3] as f64 / n,
    })
}

impl QuadrantRatios {
    pub fn sum(&self) -> f64 {
        self.tt + self.tf + self.ft + self.ff
    }
}

/// Diagnostics of the unlabeled pool for one meta-epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDiagnostics {
    pub quadrants: QuadrantRatios,
    pub accuracy_rand: f64,
    pub accuracy_emb: f64,
    /// Quadrant of every pool example, in pool order.
    pub per_example: Vec<Quadrant>,
    pub gold: Vec<usize>,
}

pub fn diagnose_pool(
    rand_labels: &[usize],
    emb_labels: &[usize],
    hidden: &[HiddenLabel],
) -> Result<PoolDiagnostics> {
    let gold = reveal_all(hidden);
    let quadrants = quadrant_ratios(rand_labels, emb_labels, &gold)?;
    let per_example = rand_labels
        .iter()
        .zip(emb_labels)
        .zip(&gold)
        .map(|((&r, &e), &g)| Quadrant::of(r, e, g))
        .collect();
    Ok(PoolDiagnostics {
        quadrants,
        accuracy_rand: label_accuracy(rand_labels, &gold)?,
        accuracy_emb: label_accuracy(emb_labels, &gold)?,
        per_example,
        gold,
    })
}

/// `accuracy(rand) = TT + TF` and `accuracy(emb) = TT + FT`, to `tol`.
pub fn consistent(q: &QuadrantRatios, accuracy_rand: f64, accuracy_emb: f64, tol: f64) -> bool {
    (q.sum() - 1.0).abs() <= tol
        && (accuracy_rand - (q.tt + q.tf)).abs() <= tol
        && (accuracy_emb - (q.tt + q.ft)).abs() <= tol
}
