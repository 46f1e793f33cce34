use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper, AdamState};
use super::model::{Activations, LabeledExample, TextCnnModel};
use crate::error::{Error, Result};
use crate::stopping::{best_index, patience_decision, StopDecision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch_dev_accuracy: Vec<f64>,
    /// 0-based index of the epoch whose snapshot was kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TextCnnModel {
    pub fn adam_hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.config.learning_rate,
            beta1: self.config.adam_beta1,
            beta2: self.config.adam_beta2,
            epsilon: self.config.adam_epsilon,
        }
    }

    pub fn new_optimizer_state(&self) -> AdamState {
        AdamState::new(self.trainable_range().len())
    }

    /// Applies one Adam update over the trainable parameter range.
    pub fn adam_step(&mut self, grads: &[f64], state: &mut AdamState, t: u64) -> Result<()> {
        let range = self.trainable_range();
        let hyper = self.adam_hyper();
        adam_step(
            &mut self.params_mut()[range.clone()],
            &grads[range],
            state,
            t,
            &hyper,
        )
    }

    pub fn accuracy_on(&self, examples: &[LabeledExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::EmptyInput("evaluation set"));
        }
        let inputs: Vec<_> = examples.iter().map(|e| e.input.clone()).collect();
        let preds = self.predict(&inputs)?;
        let correct = preds
            .iter()
            .zip(examples)
            .filter(|(p, e)| p.label == e.label)
            .count();
        Ok(correct as f64 / examples.len() as f64)
    }
}

/// Stream of the shuffling RNG, separate from the parameter-init stream.
const SHUFFLE_STREAM: u64 = 1;

trait EpochRunner {
    /// Trains one epoch and returns the dev accuracy after it.
    fn run_epoch(&mut self, epoch: usize) -> Result<f64>;
    /// Called when the epoch just run is the best so far.
    fn keep_snapshot(&mut self);
}

fn early_stopping_loop(
    runner: &mut impl EpochRunner,
    max_epochs: usize,
    patience: usize,
) -> Result<TrainRecord> {
    let mut history = Vec::new();
    let mut stopped_early = false;
    for epoch in 0..max_epochs {
        history.push(runner.run_epoch(epoch)?);
        if best_index(&history) == Some(epoch) {
            runner.keep_snapshot();
        }
        if let StopDecision::StopAtBest { .. } = patience_decision(&history, patience) {
            stopped_early = epoch + 1 < max_epochs;
            break;
        }
    }
    Ok(TrainRecord {
        best_epoch: best_index(&history).unwrap_or(0),
        epoch_dev_accuracy: history,
        stopped_early,
    })
}

struct AdamRunner<'a> {
    model: TextCnnModel,
    train: &'a [LabeledExample],
    dev: &'a [LabeledExample],
    rng: ChaCha8Rng,
    order: Vec<usize>,
    state: AdamState,
    grad: Vec<f64>,
    act: Activations,
    batch: Vec<LabeledExample>,
    step: u64,
    best_params: Option<Vec<f64>>,
}

impl EpochRunner for AdamRunner<'_> {
    fn run_epoch(&mut self, epoch: usize) -> Result<f64> {
        self.order.shuffle(&mut self.rng);
        for chunk in self.order.chunks(self.model.config.batch_size) {
            self.batch.clear();
            self.batch
                .extend(chunk.iter().map(|&i| self.train[i].clone()));
            self.grad.fill(0.0);
            self.model
                .accumulate_gradients(&self.batch, &mut self.grad, &mut self.act)
                .map_err(|e| wrap(epoch, e))?;
            self.step += 1;
            self.model
                .adam_step(&self.grad, &mut self.state, self.step)
                .map_err(|e| wrap(epoch, e))?;
        }
        self.model.accuracy_on(self.dev).map_err(|e| wrap(epoch, e))
    }

    fn keep_snapshot(&mut self) {
        match &mut self.best_params {
            Some(best) => best.copy_from_slice(self.model.params()),
            None => self.best_params = Some(self.model.params().to_vec()),
        }
    }
}

/// Shuffled mini-batch Adam with dev-accuracy early stopping. Returns the
/// snapshot of the best epoch.
pub fn train_early_stopped(
    model: TextCnnModel,
    train: &[LabeledExample],
    dev: &[LabeledExample],
) -> Result<(TextCnnModel, TrainRecord)> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if dev.is_empty() {
        return Err(Error::EmptyInput("dev set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let (max_epochs, patience) = (model.config.max_epochs, model.config.patience_epochs);
    let mut runner = AdamRunner {
        state: model.new_optimizer_state(),
        grad: vec![0.0; model.num_params()],
        batch: Vec::with_capacity(model.config.batch_size),
        model,
        train,
        dev,
        rng,
        order: (0..train.len()).collect(),
        act: Activations::default(),
        step: 0,
        best_params: None,
    };
    let record = early_stopping_loop(&mut runner, max_epochs, patience)?;
    let mut model = runner.model;
    if let Some(best) = runner.best_params {
        model.params_mut().copy_from_slice(&best);
    }
    Ok((model, record))
}

fn wrap(epoch: usize, e: Error) -> Error {
    Error::Training {
        epoch,
        source: Box::new(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted {
        accuracies: Vec<f64>,
        current: usize,
        kept: Vec<usize>,
    }

    impl EpochRunner for Scripted {
        fn run_epoch(&mut self, epoch: usize) -> Result<f64> {
            self.current = epoch;
            Ok(self.accuracies[epoch])
        }
        fn keep_snapshot(&mut self) {
            self.kept.push(self.current);
        }
    }

    fn scripted(accuracies: &[f64]) -> Scripted {
        Scripted {
            accuracies: accuracies.to_vec(),
            current: 0,
            kept: Vec::new(),
        }
    }

    #[test]
    fn patience_trace_returns_best_epoch_snapshot() {
        let mut runner = scripted(&[0.5, 0.7, 0.6, 0.6, 0.9]);
        let record = early_stopping_loop(&mut runner, 10, 2).unwrap();
        assert_eq!(record.epoch_dev_accuracy, vec![0.5, 0.7, 0.6, 0.6]);
        assert_eq!(record.best_epoch, 1);
        assert!(record.stopped_early);
        assert_eq!(runner.kept.last(), Some(&1));
    }

    #[test]
    fn max_epochs_bounds_the_loop() {
        let mut runner = scripted(&[0.5, 0.6]);
        let record = early_stopping_loop(&mut runner, 1, 3).unwrap();
        assert_eq!(record.epoch_dev_accuracy.len(), 1);
        assert_eq!(record.best_epoch, 0);
        assert!(!record.stopped_early);
        assert_eq!(runner.kept, vec![0]);
    }

    #[test]
    fn kept_snapshot_never_worse_than_earlier_epochs() {
        let mut runner = scripted(&[0.3, 0.5, 0.5, 0.4, 0.45, 0.2, 0.1]);
        let record = early_stopping_loop(&mut runner, 7, 3).unwrap();
        let best = record.epoch_dev_accuracy[record.best_epoch];
        assert!(record.epoch_dev_accuracy.iter().all(|&a| a <= best));
        assert_eq!(record.best_epoch, 1);
        assert_eq!(record.epoch_dev_accuracy.len(), 5);
    }
}
