//! The meta-epoch loop shared by disagreement-based selection and the two
//! confidence-threshold baselines.

use std::borrow::Cow;
use std::collections::HashMap;

use super::config::{Framework, SslConfig};
use super::data::{Origin, PoolExample, PreparedData, TrainItem};
use super::result::{
    EngineOutput, FloodRecord, LabelConflict, MetaEpochRecord, QuadrantCounts, SelectionRecord,
    SelectionSource,
};
use super::select::{delta_select, threshold_select};
use crate::corpus::{TokenIdSequence, Vocabulary};
use crate::embedding::{random_embeddings, EmbeddingMatrix, InitKind};
use crate::ensemble::{
    ensemble_predict, train_ensemble_with_seeds, Classifier, Ensemble, EnsemblePrediction,
};
use crate::error::{Error, Result};
use crate::metrics::{diagnose_pool, label_accuracy, Quadrant};
use crate::neuralnet::{LabeledExample, TextCnnConfig};
use crate::stopping::{best_index, patience_decision, StopDecision};

/// Trains one side's ensemble from scratch. `embedding_seed` seeds the random
/// embedding table when `kind` is [`InitKind::Random`].
pub trait EnsembleTrainer: Sync {
    type Model: Classifier;

    /// Returns the ensemble and each member's best epoch.
    fn train(
        &self,
        kind: InitKind,
        seeds: &[u64],
        embedding_seed: u64,
        train: &[LabeledExample],
        dev: &[LabeledExample],
    ) -> Result<(Ensemble<Self::Model>, Vec<usize>)>;
}

pub struct TextCnnTrainer {
    pub config: TextCnnConfig,
    pub pretrained: EmbeddingMatrix,
    pub vocab: Vocabulary,
}

impl EnsembleTrainer for TextCnnTrainer {
    type Model = crate::neuralnet::TextCnnModel;

    fn train(
        &self,
        kind: InitKind,
        seeds: &[u64],
        embedding_seed: u64,
        train: &[LabeledExample],
        dev: &[LabeledExample],
    ) -> Result<(Ensemble<Self::Model>, Vec<usize>)> {
        let embedding = match kind {
            InitKind::Pretrained => Cow::Borrowed(&self.pretrained),
            InitKind::Random => Cow::Owned(random_embeddings(
                &self.vocab,
                self.config.embed_dim,
                embedding_seed,
            )),
        };
        let (ensemble, records) =
            train_ensemble_with_seeds(seeds, &embedding, train, dev, &self.config)?;
        Ok((ensemble, records.iter().map(|r| r.best_epoch).collect()))
    }
}

/// Seeds of one meta-epoch: a disjoint block starting at
/// `seed + meta_epoch * meta_seed_stride`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaSeeds {
    pub emb: Vec<u64>,
    pub rand: Vec<u64>,
    pub rand_embedding: u64,
}

pub fn meta_seeds(config: &SslConfig, meta_epoch: usize) -> MetaSeeds {
    let base = config
        .seed
        .wrapping_add(meta_epoch as u64 * config.meta_seed_stride);
    let n_emb = config.n_emb_members as u64;
    let n_rand = config.n_rand_members as u64;
    MetaSeeds {
        emb: (0..n_emb).map(|i| base.wrapping_add(i)).collect(),
        rand: (0..n_rand).map(|i| base.wrapping_add(n_emb + i)).collect(),
        rand_embedding: base.wrapping_add(n_emb + n_rand),
    }
}

/// A pool document and the pseudo-labels it has been given so far, per side.
#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub example: PoolExample,
    pub emb_label: Option<usize>,
    pub rand_label: Option<usize>,
}

impl PoolEntry {
    fn open_for_emb(&self) -> bool {
        self.emb_label.is_none()
    }
}

/// Training sets of both sides and what is left of the pool. Outside
/// co-training the two training sets are always identical.
#[derive(Debug, Clone)]
pub struct SslState {
    pub emb_train: Vec<TrainItem>,
    pub rand_train: Vec<TrainItem>,
    pub pool: Vec<PoolEntry>,
}

impl SslState {
    pub fn new(data: &PreparedData) -> Result<Self> {
        if data.train.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        Ok(SslState {
            emb_train: data.train.clone(),
            rand_train: data.train.clone(),
            pool: data
                .pool
                .iter()
                .map(|p| PoolEntry {
                    example: p.clone(),
                    emb_label: None,
                    rand_label: None,
                })
                .collect(),
        })
    }

    /// Pool as seen by the pretrained side.
    pub fn emb_pool_len(&self) -> usize {
        self.pool.iter().filter(|e| e.open_for_emb()).count()
    }
}

/// Everything one meta-epoch produced.
#[derive(Debug, Clone)]
pub struct MetaEpochOutcome {
    pub record: MetaEpochRecord,
    pub selections: Vec<SelectionRecord>,
    pub conflicts: Vec<LabelConflict>,
    /// Ensemble labels of every emb-side pool document before selection:
    /// `doc_id -> (rand label, emb label)`.
    pub pool_labels: HashMap<String, (usize, usize)>,
}

fn examples(items: &[TrainItem]) -> Vec<LabeledExample> {
    items.iter().map(|i| i.example.clone()).collect()
}

fn ensemble_accuracy(preds: &[EnsemblePrediction], gold: &[LabeledExample]) -> Result<f64> {
    let predicted: Vec<usize> = preds.iter().map(|p| p.pseudo_label).collect();
    let gold: Vec<usize> = gold.iter().map(|e| e.label).collect();
    label_accuracy(&predicted, &gold)
}

fn pseudo_item(entry: &PoolEntry, label: usize) -> TrainItem {
    TrainItem {
        doc_id: entry.example.doc_id.clone(),
        example: LabeledExample {
            input: entry.example.input.clone(),
            label,
        },
        origin: Origin::Pseudo,
    }
}

struct SideResult<M> {
    ensemble: Ensemble<M>,
    best_epochs: Vec<usize>,
    dev: Vec<EnsemblePrediction>,
    test: Vec<EnsemblePrediction>,
}

pub struct SslEngine<'a, T: EnsembleTrainer> {
    pub trainer: &'a T,
    pub config: &'a SslConfig,
    pub data: &'a PreparedData,
}

impl<'a, T: EnsembleTrainer> SslEngine<'a, T> {
    pub fn new(trainer: &'a T, config: &'a SslConfig, data: &'a PreparedData) -> Self {
        SslEngine {
            trainer,
            config,
            data,
        }
    }

    fn train_side(
        &self,
        kind: InitKind,
        seeds: &MetaSeeds,
        train: &[TrainItem],
    ) -> Result<SideResult<T::Model>> {
        let member_seeds = match kind {
            InitKind::Pretrained => &seeds.emb,
            InitKind::Random => &seeds.rand,
        };
        let (ensemble, best_epochs) = self.trainer.train(
            kind,
            member_seeds,
            seeds.rand_embedding,
            &examples(train),
            &self.data.dev,
        )?;
        let dev_inputs: Vec<TokenIdSequence> =
            self.data.dev.iter().map(|e| e.input.clone()).collect();
        let test_inputs: Vec<TokenIdSequence> =
            self.data.test.iter().map(|e| e.input.clone()).collect();
        Ok(SideResult {
            dev: ensemble_predict(&ensemble, &dev_inputs)?,
            test: ensemble_predict(&ensemble, &test_inputs)?,
            ensemble,
            best_epochs,
        })
    }

    /// Retrains both sides from scratch on the current training sets,
    /// predicts the pool, selects, and moves the selection into the training
    /// sets.
    pub fn run_meta_epoch(
        &self,
        meta_epoch: usize,
        state: &mut SslState,
    ) -> Result<MetaEpochOutcome> {
        let framework = self.config.framework;
        let seeds = meta_seeds(self.config, meta_epoch);
        let emb = self.train_side(InitKind::Pretrained, &seeds, &state.emb_train)?;
        let rand = self.train_side(InitKind::Random, &seeds, &state.rand_train)?;

        let pool_inputs: Vec<TokenIdSequence> =
            state.pool.iter().map(|e| e.example.input.clone()).collect();
        let emb_pool = ensemble_predict(&emb.ensemble, &pool_inputs)?;
        let rand_pool = ensemble_predict(&rand.ensemble, &pool_inputs)?;

        // Diagnostics over the pretrained side's pool.
        let open: Vec<usize> = (0..state.pool.len())
            .filter(|&i| state.pool[i].open_for_emb())
            .collect();
        let pool_size = open.len();
        let mut pool_labels = HashMap::with_capacity(pool_size);
        let mut quadrant_of: HashMap<usize, (Quadrant, usize)> = HashMap::with_capacity(pool_size);
        let diagnostics = if open.is_empty() {
            None
        } else {
            let r: Vec<usize> = open.iter().map(|&i| rand_pool[i].pseudo_label).collect();
            let e: Vec<usize> = open.iter().map(|&i| emb_pool[i].pseudo_label).collect();
            let hidden: Vec<_> = open
                .iter()
                .map(|&i| state.pool[i].example.hidden_gold)
                .collect();
            let d = diagnose_pool(&r, &e, &hidden)?;
            for (k, &i) in open.iter().enumerate() {
                pool_labels.insert(state.pool[i].example.doc_id.clone(), (r[k], e[k]));
                quadrant_of.insert(i, (d.per_example[k], d.gold[k]));
            }
            Some(d)
        };

        let mut selections = Vec::new();
        let mut conflicts = Vec::new();
        let mut selected_quadrants = QuadrantCounts::default();
        let emb_before = state.emb_train.len();
        let rand_before = state.rand_train.len();
        let mut keep = Vec::with_capacity(state.pool.len());
        for (i, mut entry) in std::mem::take(&mut state.pool).into_iter().enumerate() {
            let (for_emb, for_rand) = match framework {
                Framework::Delta => {
                    let label = delta_select(&rand_pool[i], &emb_pool[i])?;
                    (label.map(|l| (l, SelectionSource::DeltaSelection)), label)
                }
                Framework::SelfTraining => {
                    let label = threshold_select(&emb_pool[i], self.config.selftrain_threshold);
                    (
                        label.map(|l| (l, SelectionSource::ConfidenceThreshold)),
                        label,
                    )
                }
                Framework::CoTraining => {
                    let t = self.config.selftrain_threshold;
                    let from_rand = entry
                        .emb_label
                        .is_none()
                        .then(|| threshold_select(&rand_pool[i], t))
                        .flatten();
                    let from_emb = entry
                        .rand_label
                        .is_none()
                        .then(|| threshold_select(&emb_pool[i], t))
                        .flatten();
                    (
                        from_rand.map(|l| (l, SelectionSource::CotrainFromRand)),
                        from_emb,
                    )
                }
            };
            if let Some((label, source)) = for_emb {
                let (quadrant, gold) = quadrant_of[&i];
                selected_quadrants.add(quadrant);
                selections.push(SelectionRecord {
                    meta_epoch,
                    document_id: entry.example.doc_id.clone(),
                    pseudo_label: label,
                    source,
                    hidden_gold_label: gold,
                    quadrant,
                });
                state.emb_train.push(pseudo_item(&entry, label));
                entry.emb_label = Some(label);
            }
            if let Some(label) = for_rand {
                if framework == Framework::CoTraining {
                    let (quadrant, gold) = match quadrant_of.get(&i) {
                        Some(&q) => q,
                        None => {
                            let gold = crate::metrics::reveal_all(&[entry.example.hidden_gold])[0];
                            (
                                Quadrant::of(
                                    rand_pool[i].pseudo_label,
                                    emb_pool[i].pseudo_label,
                                    gold,
                                ),
                                gold,
                            )
                        }
                    };
                    selections.push(SelectionRecord {
                        meta_epoch,
                        document_id: entry.example.doc_id.clone(),
                        pseudo_label: label,
                        source: SelectionSource::CotrainFromEmb,
                        hidden_gold_label: gold,
                        quadrant,
                    });
                }
                state.rand_train.push(pseudo_item(&entry, label));
                entry.rand_label = Some(label);
            }
            if let (Some(e), Some(r)) = (entry.emb_label, entry.rand_label) {
                if framework == Framework::CoTraining
                    && e != r
                    && (for_emb.is_some() || for_rand.is_some())
                {
                    conflicts.push(LabelConflict {
                        meta_epoch,
                        document_id: entry.example.doc_id.clone(),
                        label_from_emb: r,
                        label_from_rand: e,
                    });
                }
                continue;
            }
            keep.push(entry);
        }
        state.pool = keep;
        let n_selected = state.emb_train.len() - emb_before;

        let gold_dev = &self.data.dev;
        let gold_test = &self.data.test;
        let record = MetaEpochRecord {
            meta_epoch,
            train_size: emb_before,
            rand_train_size: rand_before,
            dev_accuracy_emb: ensemble_accuracy(&emb.dev, gold_dev)?,
            dev_accuracy_rand: ensemble_accuracy(&rand.dev, gold_dev)?,
            test_accuracy_emb: ensemble_accuracy(&emb.test, gold_test)?,
            test_accuracy_rand: ensemble_accuracy(&rand.test, gold_test)?,
            pool_size,
            n_selected,
            pool_remaining: state.emb_pool_len(),
            quadrant_ratios: diagnostics.as_ref().map(|d| d.quadrants),
            unlabeled_accuracy_emb: diagnostics.as_ref().map(|d| d.accuracy_emb),
            unlabeled_accuracy_rand: diagnostics.as_ref().map(|d| d.accuracy_rand),
            selected_quadrants,
            emb_best_epochs: emb.best_epochs,
            rand_best_epochs: rand.best_epochs,
        };
        Ok(MetaEpochOutcome {
            record,
            selections,
            conflicts,
            pool_labels,
        })
    }

    /// Labels the remaining pool with the chosen meta-epoch's pretrained
    /// ensemble, adds all of it to the training set, and retrains both
    /// sides once. Returns `None` when the pool is empty.
    pub fn flood_and_finalize(
        &self,
        state: &mut SslState,
        labeled_by: &MetaEpochOutcome,
        schedule_index: usize,
    ) -> Result<Option<(FloodRecord, Vec<SelectionRecord>)>> {
        if state.pool.is_empty() {
            return Ok(None);
        }
        let source_epoch = labeled_by.record.meta_epoch;
        let mut selections = Vec::with_capacity(state.pool.len());
        let entries = std::mem::take(&mut state.pool);
        let hidden: Vec<_> = entries.iter().map(|e| e.example.hidden_gold).collect();
        let gold = crate::metrics::reveal_all(&hidden);
        let mut correct = 0usize;
        for (entry, &g) in entries.iter().zip(&gold) {
            let &(r, e) = labeled_by
                .pool_labels
                .get(&entry.example.doc_id)
                .expect("pool only shrinks, so every remaining document was labeled at the chosen meta-epoch");
            correct += usize::from(e == g);
            selections.push(SelectionRecord {
                meta_epoch: source_epoch,
                document_id: entry.example.doc_id.clone(),
                pseudo_label: e,
                source: SelectionSource::Flood,
                hidden_gold_label: g,
                quadrant: Quadrant::of(r, e, g),
            });
            state.emb_train.push(pseudo_item(entry, e));
            state.rand_train.push(pseudo_item(entry, e));
        }
        let seeds = meta_seeds(self.config, schedule_index);
        let emb = self.train_side(InitKind::Pretrained, &seeds, &state.emb_train)?;
        let rand = self.train_side(InitKind::Random, &seeds, &state.rand_train)?;
        let record = FloodRecord {
            meta_epoch: schedule_index,
            labeled_by_meta_epoch: source_epoch,
            n_flooded: entries.len(),
            retrained: true,
            train_size: state.emb_train.len(),
            pseudo_label_accuracy: Some(correct as f64 / entries.len() as f64),
            dev_accuracy_emb: ensemble_accuracy(&emb.dev, &self.data.dev)?,
            dev_accuracy_rand: ensemble_accuracy(&rand.dev, &self.data.dev)?,
            test_accuracy_emb: ensemble_accuracy(&emb.test, &self.data.test)?,
            test_accuracy_rand: ensemble_accuracy(&rand.test, &self.data.test)?,
        };
        Ok(Some((record, selections)))
    }

    /// Runs meta-epochs until meta-level early stopping, the meta-epoch cap,
    /// or an exhausted pool; then floods if configured.
    pub fn run(&self) -> Result<EngineOutput> {
        self.config.validate()?;
        let mut state = SslState::new(self.data)?;
        let mut outcomes: Vec<MetaEpochOutcome> = Vec::new();
        let mut history = Vec::new();
        let mut selections = Vec::new();
        let mut conflicts = Vec::new();
        for meta_epoch in 0..self.config.max_meta_epochs {
            let outcome = self.run_meta_epoch(meta_epoch, &mut state)?;
            log::info!(
                "{} meta-epoch {meta_epoch}: dev emb {:.4} rand {:.4}, test emb {:.4}, selected {}, pool {}",
                self.config.framework,
                outcome.record.dev_accuracy_emb,
                outcome.record.dev_accuracy_rand,
                outcome.record.test_accuracy_emb,
                outcome.record.n_selected,
                outcome.record.pool_remaining
            );
            history.push(outcome.record.dev_accuracy_emb);
            selections.extend(outcome.selections.iter().cloned());
            conflicts.extend(outcome.conflicts.iter().cloned());
            outcomes.push(outcome);
            if let StopDecision::StopAtBest { .. } =
                patience_decision(&history, self.config.meta_patience)
            {
                break;
            }
            if state.pool.is_empty() {
                break;
            }
        }
        let best = best_index(&history).expect("at least one meta-epoch ran");
        let best_test = outcomes[best].record.test_accuracy_emb;
        let mut flood = None;
        let mut final_test_accuracy = best_test;
        if self.config.framework == Framework::Delta && self.config.flood_after_stop {
            if let Some((record, flooded)) =
                self.flood_and_finalize(&mut state, &outcomes[best], outcomes.len())?
            {
                final_test_accuracy = record.test_accuracy_emb;
                selections.extend(flooded);
                flood = Some(record);
            }
        }
        Ok(EngineOutput {
            framework: self.config.framework,
            records: outcomes.into_iter().map(|o| o.record).collect(),
            best_meta_epoch: best,
            final_test_accuracy,
            flood,
            selections,
            conflicts,
        })
    }
}
