//! Bagged duplicates of one classifier and their averaged, unanimity-aware
//! joint prediction.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::TokenIdSequence;
use crate::embedding::{EmbeddingMatrix, InitKind};
use crate::error::{Error, Result};
use crate::neuralnet::{
    argmax, init_model, train_early_stopped, LabeledExample, Prediction, TextCnnConfig,
    TextCnnModel, TrainRecord,
};

pub const DEFAULT_EMB_MEMBERS: usize = 3;
pub const DEFAULT_RAND_MEMBERS: usize = 1;

pub fn default_members(kind: InitKind) -> usize {
    match kind {
        InitKind::Pretrained => DEFAULT_EMB_MEMBERS,
        InitKind::Random => DEFAULT_RAND_MEMBERS,
    }
}

/// Anything that maps encoded documents to class distributions.
pub trait Classifier: Send + Sync {
    fn predict(&self, inputs: &[TokenIdSequence]) -> Result<Vec<Prediction>>;
}

impl Classifier for TextCnnModel {
    fn predict(&self, inputs: &[TokenIdSequence]) -> Result<Vec<Prediction>> {
        TextCnnModel::predict(self, inputs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<M = TextCnnModel> {
    members: Vec<M>,
    seeds: Vec<u64>,
    pub init_kind: InitKind,
}

impl<M> Ensemble<M> {
    pub fn new(members: Vec<M>, seeds: Vec<u64>, init_kind: InitKind) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyInput("ensemble members"));
        }
        if members.len() != seeds.len() {
            return Err(Error::LengthMismatch(members.len(), seeds.len()));
        }
        check_distinct(&seeds)?;
        Ok(Ensemble {
            members,
            seeds,
            init_kind,
        })
    }

    pub fn members(&self) -> &[M] {
        &self.members
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn check_distinct(seeds: &[u64]) -> Result<()> {
    let mut seen = HashSet::new();
    for &s in seeds {
        if !seen.insert(s) {
            return Err(Error::DuplicateMemberSeed(s));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub member_labels: Vec<usize>,
    pub unanimous: bool,
    pub pseudo_label: usize,
    pub mean_probs: Vec<f64>,
    pub confidence: f64,
}

impl EnsemblePrediction {
    pub fn num_classes(&self) -> usize {
        self.mean_probs.len()
    }
}

/// Averages member distributions. Members are summed in a canonical order
/// so the result does not depend on member order.
pub fn aggregate(member_predictions: &[&Prediction]) -> Result<EnsemblePrediction> {
    let first = member_predictions
        .first()
        .ok_or(Error::EmptyInput("member predictions"))?;
    let classes = first.probs.len();
    if let Some(bad) = member_predictions.iter().find(|p| p.probs.len() != classes) {
        return Err(Error::ClassSetMismatch(classes, bad.probs.len()));
    }
    let mut ordered: Vec<&[f64]> = member_predictions
        .iter()
        .map(|p| p.probs.as_slice())
        .collect();
    ordered.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    let mut mean_probs = vec![0.0; classes];
    for probs in ordered {
        for (m, p) in mean_probs.iter_mut().zip(probs) {
            *m += p;
        }
    }
    let n = member_predictions.len() as f64;
    for m in mean_probs.iter_mut() {
        *m /= n;
    }
    let member_labels: Vec<usize> = member_predictions.iter().map(|p| p.label).collect();
    let unanimous = member_labels.iter().all(|&l| l == member_labels[0]);
    let pseudo_label = argmax(&mean_probs);
    Ok(EnsemblePrediction {
        confidence: mean_probs[pseudo_label],
        member_labels,
        unanimous,
        pseudo_label,
        mean_probs,
    })
}

pub fn ensemble_predict<M: Classifier>(
    ensemble: &Ensemble<M>,
    inputs: &[TokenIdSequence],
) -> Result<Vec<EnsemblePrediction>> {
    let per_member: Vec<Vec<Prediction>> = ensemble
        .members
        .par_iter()
        .map(|m| m.predict(inputs))
        .collect::<Result<_>>()?;
    (0..inputs.len())
        .map(|i| {
            let column: Vec<&Prediction> = per_member.iter().map(|preds| &preds[i]).collect();
            aggregate(&column)
        })
        .collect()
}

/// Trains one member per seed on identical data. Members run in parallel
/// and each is deterministic under its own seed.
pub fn train_ensemble_with_seeds(
    seeds: &[u64],
    embedding_source: &EmbeddingMatrix,
    train: &[LabeledExample],
    dev: &[LabeledExample],
    config: &TextCnnConfig,
) -> Result<(Ensemble, Vec<TrainRecord>)> {
    if seeds.is_empty() {
        return Err(Error::Config("ensemble needs at least one member".into()));
    }
    check_distinct(seeds)?;
    let trained: Vec<(TextCnnModel, TrainRecord)> = seeds
        .par_iter()
        .map(|&seed| {
            let model = init_model(config, embedding_source, seed)?;
            train_early_stopped(model, train, dev)
        })
        .collect::<Result<_>>()?;
    let (members, records): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    Ok((
        Ensemble::new(members, seeds.to_vec(), embedding_source.kind)?,
        records,
    ))
}

/// Member `i` uses seed `base_seed + i`.
pub fn train_ensemble(
    n_members: usize,
    embedding_source: &EmbeddingMatrix,
    train: &[LabeledExample],
    dev: &[LabeledExample],
    config: &TextCnnConfig,
    base_seed: u64,
) -> Result<(Ensemble, Vec<TrainRecord>)> {
    let seeds: Vec<u64> = (0..n_members as u64).map(|i| base_seed + i).collect();
    train_ensemble_with_seeds(&seeds, embedding_source, train, dev, config)
}

const ENSEMBLE_MANIFEST: &str = "ensemble.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub init_kind: InitKind,
    pub seeds: Vec<u64>,
    pub members: Vec<String>,
    pub config_digest: String,
}

pub fn config_digest(config: &TextCnnConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

impl Ensemble<TextCnnModel> {
    /// Writes one checkpoint per member plus `ensemble.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut names = Vec::new();
        for (i, member) in self.members.iter().enumerate() {
            let name = format!("member-{i}.ckpt");
            member.save(&dir.join(&name))?;
            names.push(name);
        }
        let manifest = EnsembleManifest {
            init_kind: self.init_kind,
            seeds: self.seeds.clone(),
            members: names,
            config_digest: config_digest(&self.members[0].config),
        };
        let path = dir.join(ENSEMBLE_MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(ENSEMBLE_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: EnsembleManifest = serde_json::from_str(&text)?;
        let members = manifest
            .members
            .iter()
            .map(|name| TextCnnModel::load(&dir.join(name)))
            .collect::<Result<Vec<_>>>()?;
        for m in &members {
            if config_digest(&m.config) != manifest.config_digest {
                return Err(Error::Manifest {
                    file: path,
                    field: "config_digest".into(),
                });
            }
            if m.init_kind != manifest.init_kind {
                return Err(Error::Manifest {
                    file: path,
                    field: "init_kind".into(),
                });
            }
        }
        Ensemble::new(members, manifest.seeds, manifest.init_kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(probs: &[f64]) -> Prediction {
        Prediction::from_probs(probs.to_vec())
    }

    #[test]
    fn mean_of_three_members() {
        let (a, b, c) = (pred(&[0.9, 0.1]), pred(&[0.6, 0.4]), pred(&[0.8, 0.2]));
        let e = aggregate(&[&a, &b, &c]).unwrap();
        assert!((e.mean_probs[0] - 2.3 / 3.0).abs() < 1e-12);
        assert!((e.mean_probs[1] - 0.7 / 3.0).abs() < 1e-12);
        assert!(e.unanimous);
        assert_eq!(e.pseudo_label, 0);
        assert!((e.confidence - 0.76666666666).abs() < 1e-4);
    }

    #[test]
    fn split_vote_is_not_unanimous() {
        let (a, b, c) = (pred(&[0.9, 0.1]), pred(&[0.6, 0.4]), pred(&[0.2, 0.8]));
        let e = aggregate(&[&a, &b, &c]).unwrap();
        assert_eq!(e.member_labels, vec![0, 0, 1]);
        assert!(!e.unanimous);
        assert_eq!(e.pseudo_label, 0);
    }

    #[test]
    fn singleton_is_identity() {
        let a = pred(&[0.2, 0.5, 0.3]);
        let e = aggregate(&[&a]).unwrap();
        assert_eq!(e.mean_probs, a.probs);
        assert_eq!(e.pseudo_label, a.label);
        assert!(e.unanimous);
    }

    #[test]
    fn class_count_mismatch_is_an_error() {
        let (a, b) = (pred(&[0.5, 0.5]), pred(&[0.2, 0.3, 0.5]));
        assert!(matches!(
            aggregate(&[&a, &b]),
            Err(Error::ClassSetMismatch(2, 3))
        ));
    }

    #[test]
    fn duplicate_seeds_are_rejected() {
        let err = Ensemble::new(vec![(), ()], vec![4, 4], InitKind::Random).unwrap_err();
        assert_eq!(err.to_string(), "duplicate member seed 4");
    }

    fn distribution(classes: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..1.0, classes).prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn aggregation_is_order_invariant(
            members in (2usize..5).prop_flat_map(|c| prop::collection::vec(distribution(c), 1..5)),
            rotate in 0usize..5,
        ) {
            let preds: Vec<Prediction> = members.into_iter().map(Prediction::from_probs).collect();
            let refs: Vec<&Prediction> = preds.iter().collect();
            let mut permuted = refs.clone();
            let k = rotate % permuted.len();
            permuted.rotate_left(k);
            permuted.reverse();
            let a = aggregate(&refs).unwrap();
            let b = aggregate(&permuted).unwrap();
            prop_assert_eq!(&a.mean_probs, &b.mean_probs);
            prop_assert_eq!(a.unanimous, b.unanimous);
            prop_assert_eq!(a.pseudo_label, b.pseudo_label);
            prop_assert_eq!(a.confidence, b.confidence);
            let (mut la, mut lb) = (a.member_labels.clone(), b.member_labels.clone());
            la.sort_unstable();
            lb.sort_unstable();
            prop_assert_eq!(la, lb);
            prop_assert!((a.mean_probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert_eq!(a.confidence, a.mean_probs[a.pseudo_label]);
            prop_assert_eq!(a.unanimous, a.member_labels.iter().all(|&l| l == a.member_labels[0]));
        }

        #[test]
        fn pseudo_label_survives_common_rescaling(
            members in (2usize..5).prop_flat_map(|c| prop::collection::vec(distribution(c), 1..5)),
            scale in 0.1f64..10.0,
        ) {
            let preds: Vec<Prediction> = members.iter().cloned().map(Prediction::from_probs).collect();
            let scaled: Vec<Prediction> = members
                .iter()
                .map(|p| Prediction { label: argmax(p), probs: p.iter().map(|x| x * scale).collect() })
                .collect();
            let a = aggregate(&preds.iter().collect::<Vec<_>>()).unwrap();
            let b = aggregate(&scaled.iter().collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(a.pseudo_label, b.pseudo_label);
        }
    }
}
