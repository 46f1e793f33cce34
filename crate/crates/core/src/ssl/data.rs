use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_vocabulary, encode, Document, HiddenLabel, SplitBundle, TokenIdSequence, Vocabulary,
};
use crate::neuralnet::LabeledExample;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub doc_id: String,
    pub example: LabeledExample,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Gold,
    Pseudo,
}

/// An unlabeled-pool document, encoded. The gold label travels with it but
/// can only be read by the metrics module.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolExample {
    pub doc_id: String,
    pub input: TokenIdSequence,
    pub hidden_gold: HiddenLabel,
}

/// A split encoded against one vocabulary, ready for training.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub num_classes: usize,
    pub train: Vec<TrainItem>,
    pub dev: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub pool: Vec<PoolExample>,
}

/// Vocabulary over the text of the labeled pool and the unlabeled pool.
/// Unlabeled text is usable; its labels are not. The test split is excluded.
pub fn build_run_vocabulary(split: &SplitBundle, min_freq: usize) -> Vocabulary {
    let lists = split
        .train
        .iter()
        .chain(&split.dev)
        .map(|d| d.tokens.as_slice())
        .chain(split.unlabeled.iter().map(|d| d.tokens.as_slice()));
    build_vocabulary(lists, min_freq, split.num_classes)
}

fn labeled(docs: &[Document], vocab: &Vocabulary, max_len: usize) -> Vec<LabeledExample> {
    docs.iter()
        .map(|d| LabeledExample {
            input: encode(&d.tokens, vocab, max_len),
            label: d.gold_label.expect("labeled partition"),
        })
        .collect()
}

impl PreparedData {
    pub fn from_split(split: &SplitBundle, vocab: &Vocabulary, max_len: usize) -> Self {
        let train = split
            .train
            .iter()
            .zip(labeled(&split.train, vocab, max_len))
            .map(|(d, example)| TrainItem {
                doc_id: d.id.clone(),
                example,
                origin: Origin::Gold,
            })
            .collect();
        let pool = split
            .unlabeled
            .iter()
            .map(|d| PoolExample {
                doc_id: d.id.clone(),
                input: encode(&d.tokens, vocab, max_len),
                hidden_gold: d.hidden_gold,
            })
            .collect();
        PreparedData {
            num_classes: split.num_classes,
            train,
            dev: labeled(&split.dev, vocab, max_len),
            test: labeled(&split.test, vocab, max_len),
            pool,
        }
    }
}
