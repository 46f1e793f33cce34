//! Semi-supervised training: the disagreement-selection meta-epoch loop,
//! meta-level early stopping with the final flood step, and the
//! self-training and co-training baselines.

mod config;
mod data;
mod engine;
mod result;
mod select;

use std::path::Path;

pub use config::{Framework, SslConfig};
pub use data::{build_run_vocabulary, Origin, PoolExample, PreparedData, TrainItem};
pub use engine::{
    meta_seeds, EnsembleTrainer, MetaEpochOutcome, MetaSeeds, PoolEntry, SslEngine, SslState,
    TextCnnTrainer,
};
pub use result::{
    environment_digest, EmbeddingSummary, EngineOutput, FloodRecord, LabelConflict,
    MetaEpochRecord, QuadrantCounts, RunManifest, RunResult, SelectionRecord, SelectionSource,
    SplitSummary,
};
pub use select::{delta_select, threshold_select};

use crate::corpus::{split_semi_supervised, Dataset, Document, SplitBundle};
use crate::embedding::{load_pretrained, RANDOM_INIT_SCALE};
use crate::error::Result;

/// Runs one framework end to end on a prepared split.
pub fn run_experiment(
    split: &SplitBundle,
    vectors: &Path,
    config: &SslConfig,
) -> Result<RunResult> {
    let mut config = config.clone();
    config.classifier.num_classes = split.num_classes;
    config.validate()?;
    let vocab = build_run_vocabulary(split, config.min_freq);
    let pretrained = load_pretrained(vectors, &vocab, config.classifier.embed_dim, config.seed)?;
    let data = PreparedData::from_split(split, &vocab, config.classifier.max_len);
    let embedding = EmbeddingSummary {
        vectors_file: vectors
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        dim: pretrained.dim,
        vocab_size: vocab.len(),
        coverage: pretrained.coverage,
        random_init_scale: RANDOM_INIT_SCALE,
        warnings: pretrained.warnings.clone(),
    };
    let trainer = TextCnnTrainer {
        config: config.classifier.clone(),
        pretrained,
        vocab,
    };
    let output = SslEngine::new(&trainer, &config, &data).run()?;
    let manifest = RunManifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        environment_digest: environment_digest(),
        split: SplitSummary {
            split_seed: split.split_seed,
            labeled_fraction: split.labeled_fraction,
            dev_fraction: split.dev_fraction,
            num_classes: split.num_classes,
            train_size: split.train.len(),
            dev_size: split.dev.len(),
            test_size: split.test.len(),
            unlabeled_size: split.unlabeled.len(),
            warnings: split.warnings.clone(),
        },
        embedding,
        config,
    };
    Ok(RunResult::new(manifest, output))
}

/// One independent run per labeled fraction, all sharing `test` and the
/// split seed.
pub fn run_fraction_sweep(
    dataset: &Dataset,
    test: &[Document],
    fractions: &[f64],
    dev_fraction: f64,
    split_seed: u64,
    vectors: &Path,
    config: &SslConfig,
) -> Result<Vec<RunResult>> {
    fractions
        .iter()
        .map(|&fraction| {
            let split = split_semi_supervised(dataset, test, fraction, dev_fraction, split_seed)?;
            run_experiment(&split, vectors, config)
        })
        .collect()
}
