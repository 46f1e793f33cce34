//! Central finite-difference verification of the analytic gradients.

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::TextCnnConfig;
use super::model::{init_model, LabeledExample, TextCnnModel};
use crate::corpus::{build_vocabulary, TokenIdSequence};
use crate::embedding::random_embeddings;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-4;
pub const MAX_RELATIVE_ERROR: f64 = 1e-4;
pub const NEAR_ZERO_ABSOLUTE: f64 = 1e-8;
/// Gradients smaller than this in magnitude are judged by absolute error.
pub const NEAR_ZERO_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub label: String,
    pub num_params: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub worst_param: usize,
    pub failures: usize,
    /// Parameters whose ±h perturbation crosses a ReLU or max-pool switch
    /// even at the reduced step; excluded from the error statistics.
    pub kinks: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Relative error for ordinary entries, absolute error for near-zero ones.
pub fn entry_passes(analytic: f64, numeric: f64) -> bool {
    let abs = (analytic - numeric).abs();
    if analytic.abs().max(numeric.abs()) < NEAR_ZERO_SCALE {
        abs < NEAR_ZERO_ABSOLUTE
    } else {
        relative_error(analytic, numeric) < MAX_RELATIVE_ERROR
    }
}

/// Zero for near-zero entries, which are judged by absolute error instead.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < NEAR_ZERO_SCALE {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn pattern(model: &TextCnnModel, batch: &[LabeledExample]) -> Result<Vec<u64>> {
    batch
        .iter()
        .map(|ex| model.activation_pattern(&ex.input.ids))
        .collect()
}

/// Compares every analytic gradient entry against `(L(θ+h) − L(θ−h)) / 2h`.
pub fn check_gradients(
    model: &TextCnnModel,
    batch: &[LabeledExample],
    label: &str,
) -> Result<GradCheckReport> {
    let (_, analytic) = model.loss_and_gradients(batch)?;
    let mut probe = model.clone();
    let trainable = model.trainable_range();

    let mut report = GradCheckReport {
        label: label.to_string(),
        num_params: model.num_params(),
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        worst_param: 0,
        failures: 0,
        kinks: 0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let expected = if trainable.contains(&i) { a } else { 0.0 };
        let mut numeric = None;
        for h in [FD_STEP, FD_STEP * 1e-2] {
            let original = probe.params()[i];
            probe.params_mut()[i] = original + h;
            let plus = probe.loss(batch)?;
            let plus_pattern = pattern(&probe, batch)?;
            probe.params_mut()[i] = original - h;
            let minus = probe.loss(batch)?;
            let minus_pattern = pattern(&probe, batch)?;
            probe.params_mut()[i] = original;
            if plus_pattern == minus_pattern {
                numeric = Some((plus - minus) / (2.0 * h));
                break;
            }
        }
        let Some(numeric) = numeric else {
            report.kinks += 1;
            continue;
        };
        let numeric = if trainable.contains(&i) { numeric } else { 0.0 };
        let rel = relative_error(expected, numeric);
        let abs = (expected - numeric).abs();
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_param = i;
        }
        report.max_absolute_error = report.max_absolute_error.max(abs);
        if !entry_passes(expected, numeric) {
            report.failures += 1;
        }
    }
    Ok(report)
}

/// A small random model plus a two-example batch. Sequences are at most
/// 16 tokens, embeddings at most 8 wide, and conv blocks 2 channels.
pub fn toy_case(seed: u64) -> Result<(TextCnnModel, Vec<LabeledExample>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_len = rng.gen_range(5..=16);
    let widest_allowed = (max_len + 1) / 3;
    let mut sizes: Vec<usize> = (1..=widest_allowed.min(5)).collect();
    sizes.shuffle(&mut rng);
    let n_kernels = rng.gen_range(1..=sizes.len().min(4));
    let mut kernel_sizes = sizes[..n_kernels].to_vec();
    kernel_sizes.sort_unstable();
    let embed_dim = rng.gen_range(2..=8);
    let num_classes = rng.gen_range(2..=4);
    let config = TextCnnConfig {
        max_len,
        embed_dim,
        kernel_sizes,
        channels_block1: 2,
        channels_block2: 2,
        num_classes,
        ..TextCnnConfig::default()
    };

    let words: Vec<String> = (0..8).map(|i| format!("tok{i}")).collect();
    let vocab = build_vocabulary([words.as_slice()], 1, num_classes);
    let embedding = random_embeddings(&vocab, embed_dim, seed ^ 0xE3B);
    let mut model = init_model(&config, &embedding, seed)?;

    let bias = Uniform::new_inclusive(-0.2, 0.2);
    let layout = model.layout().clone();
    let bias_ranges = layout
        .conv1
        .iter()
        .chain(&layout.conv2)
        .map(|s| s.bias.clone())
        .chain(std::iter::once(layout.dense_bias.clone()));
    for range in bias_ranges {
        for v in &mut model.params_mut()[range] {
            *v = bias.sample(&mut rng);
        }
    }

    let batch = (0..2)
        .map(|_| {
            let filled = rng.gen_range(max_len - 2..=max_len);
            let mut ids: Vec<u32> = (0..filled)
                .map(|_| rng.gen_range(1..vocab.len() as u32))
                .collect();
            ids.resize(max_len, 0);
            LabeledExample {
                input: TokenIdSequence { ids },
                label: rng.gen_range(0..num_classes),
            }
        })
        .collect();
    Ok((model, batch))
}

/// Runs the check over `count` random toy configurations.
pub fn run_suite(count: usize, base_seed: u64) -> Result<Vec<GradCheckReport>> {
    (0..count as u64)
        .map(|i| {
            let seed = base_seed + i;
            let (model, batch) = toy_case(seed)?;
            check_gradients(
                &model,
                &batch,
                &format!(
                    "seed={seed} len={} dim={} kernels={:?} classes={}",
                    model.config.max_len,
                    model.config.embed_dim,
                    model.config.kernel_sizes,
                    model.config.num_classes
                ),
            )
        })
        .collect()
}
