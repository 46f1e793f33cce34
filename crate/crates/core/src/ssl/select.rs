//! Pseudo-label selection rules.

use crate::ensemble::EnsemblePrediction;
use crate::error::{Error, Result};

/// The disagreement rule: both ensembles unanimous, and their labels differ.
/// The pseudo-label is always the pretrained-side label.
pub fn delta_select(
    rand_pred: &EnsemblePrediction,
    emb_pred: &EnsemblePrediction,
) -> Result<Option<usize>> {
    if rand_pred.num_classes() != emb_pred.num_classes() {
        return Err(Error::ClassSetMismatch(
            rand_pred.num_classes(),
            emb_pred.num_classes(),
        ));
    }
    let agreed_within = rand_pred.unanimous && emb_pred.unanimous;
    let differ = rand_pred.pseudo_label != emb_pred.pseudo_label;
    Ok((agreed_within && differ).then_some(emb_pred.pseudo_label))
}

/// Confidence rule of the self-training baseline: `confidence >= threshold`.
pub fn threshold_select(pred: &EnsemblePrediction, threshold: f64) -> Option<usize> {
    (pred.confidence >= threshold).then_some(pred.pseudo_label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::aggregate;
    use crate::neuralnet::Prediction;

    fn one_hot(label: usize, classes: usize) -> Prediction {
        let mut p = vec![0.05 / (classes - 1) as f64; classes];
        p[label] = 0.95;
        Prediction::from_probs(p)
    }

    fn ensemble(labels: &[usize], classes: usize) -> EnsemblePrediction {
        let preds: Vec<Prediction> = labels.iter().map(|&l| one_hot(l, classes)).collect();
        aggregate(&preds.iter().collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn disagreement_between_unanimous_sides_selects_emb_label() {
        assert_eq!(
            delta_select(&ensemble(&[0], 3), &ensemble(&[1, 1, 1], 3)).unwrap(),
            Some(1)
        );
    }

    #[test]
    fn agreement_is_not_selected() {
        assert_eq!(
            delta_select(&ensemble(&[1], 3), &ensemble(&[1, 1, 1], 3)).unwrap(),
            None
        );
    }

    #[test]
    fn split_emb_vote_is_not_selected() {
        assert_eq!(
            delta_select(&ensemble(&[0], 3), &ensemble(&[1, 1, 2], 3)).unwrap(),
            None
        );
    }

    #[test]
    fn split_rand_vote_is_not_selected() {
        assert_eq!(
            delta_select(&ensemble(&[0, 2], 3), &ensemble(&[1, 1, 1], 3)).unwrap(),
            None
        );
    }

    #[test]
    fn class_mismatch_is_an_error() {
        assert!(delta_select(&ensemble(&[0], 2), &ensemble(&[1], 3)).is_err());
    }

    #[test]
    fn threshold_rule() {
        let p = |probs: &[f64]| aggregate(&[&Prediction::from_probs(probs.to_vec())]).unwrap();
        assert_eq!(threshold_select(&p(&[0.95, 0.05]), 0.9), Some(0));
        assert_eq!(threshold_select(&p(&[0.85, 0.15]), 0.9), None);
        assert_eq!(threshold_select(&p(&[0.5, 0.5]), 0.5), Some(0));
        assert_eq!(threshold_select(&p(&[0.3, 0.7]), 0.5), Some(1));
    }
}
