//! Two-block convolutional text classifier with hand-derived gradients.
//!
//! Per kernel size `k`, block one convolves the embedded sequence, applies
//! ReLU and a (2, 2) max-pool. The pooled maps are concatenated along the
//! channel axis after truncating to the shortest. Block two convolves that
//! map per kernel size, applies ReLU and a global max-pool. The pooled
//! features feed a dense softmax layer.

use std::ops::Range;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TextCnnConfig;
use crate::corpus::{TokenIdSequence, PAD_ID};
use crate::embedding::{EmbeddingMatrix, InitKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvSlot {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][k][in]`, so one output channel is a contiguous `k * in` filter.
    pub weight: Range<usize>,
    pub bias: Range<usize>,
}

impl ConvSlot {
    fn filter_len(&self) -> usize {
        self.kernel * self.in_channels
    }
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub embedding: Range<usize>,
    pub conv1: Vec<ConvSlot>,
    pub conv2: Vec<ConvSlot>,
    pub dense_weight: Range<usize>,
    pub dense_bias: Range<usize>,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(config: &TextCnnConfig, vocab_rows: usize) -> Self {
        let mut cursor = 0;
        let mut take = |n: usize| {
            let r = cursor..cursor + n;
            cursor += n;
            r
        };
        let embedding = take(vocab_rows * config.embed_dim);
        let conv1 = config
            .kernel_sizes
            .iter()
            .map(|&k| ConvSlot {
                kernel: k,
                in_channels: config.embed_dim,
                out_channels: config.channels_block1,
                weight: take(config.channels_block1 * k * config.embed_dim),
                bias: take(config.channels_block1),
            })
            .collect();
        let width = config.block1_width();
        let conv2 = config
            .kernel_sizes
            .iter()
            .map(|&k| ConvSlot {
                kernel: k,
                in_channels: width,
                out_channels: config.channels_block2,
                weight: take(config.channels_block2 * k * width),
                bias: take(config.channels_block2),
            })
            .collect();
        let dense_weight = take(config.num_classes * config.feature_dim());
        let dense_bias = take(config.num_classes);
        ParamLayout {
            embedding,
            conv1,
            conv2,
            dense_weight,
            dense_bias,
            total: cursor,
        }
    }

    /// Every weight and bias range paired with its `(fan_in, fan_out)`,
    /// embedding excluded.
    fn initialized_tensors(&self, config: &TextCnnConfig) -> Vec<(Range<usize>, usize, usize)> {
        let mut out = Vec::new();
        for slot in self.conv1.iter().chain(&self.conv2) {
            out.push((
                slot.weight.clone(),
                slot.kernel * slot.in_channels,
                slot.kernel * slot.out_channels,
            ));
        }
        out.push((
            self.dense_weight.clone(),
            config.feature_dim(),
            config.num_classes,
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    pub probs: Vec<f64>,
}

impl Prediction {
    pub fn from_probs(probs: Vec<f64>) -> Self {
        Prediction {
            label: argmax(&probs),
            probs,
        }
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledExample {
    pub input: TokenIdSequence,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextCnnModel {
    pub config: TextCnnConfig,
    pub vocab_rows: usize,
    pub init_kind: InitKind,
    pub seed: u64,
    layout: ParamLayout,
    params: Vec<f64>,
}

pub fn init_model(
    config: &TextCnnConfig,
    embedding: &EmbeddingMatrix,
    seed: u64,
) -> Result<TextCnnModel> {
    config.validate()?;
    if embedding.dim != config.embed_dim {
        return Err(Error::DimensionMismatch(format!(
            "embedding dim {} but config embed_dim {}",
            embedding.dim, config.embed_dim
        )));
    }
    let layout = ParamLayout::new(config, embedding.rows);
    let mut params = vec![0.0; layout.total];
    params[layout.embedding.clone()].copy_from_slice(&embedding.values);
    params[layout.embedding.start..layout.embedding.start + config.embed_dim].fill(0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (range, fan_in, fan_out) in layout.initialized_tensors(config) {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-s, s);
        for v in &mut params[range] {
            *v = dist.sample(&mut rng);
        }
    }
    Ok(TextCnnModel {
        config: config.clone(),
        vocab_rows: embedding.rows,
        init_kind: embedding.kind,
        seed,
        layout,
        params,
    })
}

/// Intermediate values of one example's forward pass, kept for backprop.
#[derive(Debug, Default, Clone)]
pub(crate) struct Activations {
    x: Vec<f64>,
    pre1: Vec<Vec<f64>>,
    arg1: Vec<Vec<u32>>,
    z: Vec<f64>,
    pre2: Vec<Vec<f64>>,
    arg2: Vec<Vec<u32>>,
    features: Vec<f64>,
    logits: Vec<f64>,
    pub(crate) probs: Vec<f64>,
    dz: Vec<f64>,
    dx: Vec<f64>,
    dfeat: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[c] += sum_j xs[j] * wt[j * out.len() + c]`, eight outputs at a time
/// held in registers.
#[inline]
fn accumulate_outputs(out: &mut [f64], xs: &[f64], wt: &[f64]) {
    let n = out.len();
    debug_assert_eq!(wt.len(), xs.len() * n);
    let full = n - n % 8;
    for base in (0..full).step_by(8) {
        let mut acc = [0.0f64; 8];
        acc.copy_from_slice(&out[base..base + 8]);
        for (row, &xv) in wt.chunks_exact(n).zip(xs) {
            let w: &[f64; 8] = row[base..base + 8].try_into().expect("eight lanes");
            for i in 0..8 {
                acc[i] += xv * w[i];
            }
        }
        out[base..base + 8].copy_from_slice(&acc);
    }
    for c in full..n {
        let mut acc = out[c];
        for (j, &xv) in xs.iter().enumerate() {
            acc += xv * wt[j * n + c];
        }
        out[c] = acc;
    }
}

/// Convolution filters transposed from `[out][k][in]` to `[k][in][out]`,
/// rebuilt whenever the parameters change.
#[derive(Debug, Clone, Default)]
pub(crate) struct Filters {
    conv1: Vec<Vec<f64>>,
    conv2: Vec<Vec<f64>>,
}

fn transpose_slot(p: &[f64], slot: &ConvSlot) -> Vec<f64> {
    let flen = slot.filter_len();
    let out = slot.out_channels;
    let w = &p[slot.weight.clone()];
    let mut t = vec![0.0; w.len()];
    for c in 0..out {
        for j in 0..flen {
            t[j * out + c] = w[c * flen + j];
        }
    }
    t
}

fn check_finite(values: &[f64], layer: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalDivergence { layer: layer() })
    }
}

fn softmax_into(logits: &[f64], probs: &mut Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    probs.clear();
    probs.extend(logits.iter().map(|&l| (l - max).exp()));
    let sum: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= sum;
    }
}

impl TextCnnModel {
    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Current embedding row.
    pub fn embedding_row(&self, index: usize) -> &[f64] {
        let d = self.config.embed_dim;
        let start = self.layout.embedding.start + index * d;
        &self.params[start..start + d]
    }

    /// Parameter range updated by the optimizer.
    pub fn trainable_range(&self) -> Range<usize> {
        if self.config.fine_tune_embeddings {
            self.layout.embedding.start..self.layout.total
        } else {
            self.layout.embedding.end..self.layout.total
        }
    }

    pub(crate) fn from_parts(
        config: TextCnnConfig,
        vocab_rows: usize,
        init_kind: InitKind,
        seed: u64,
        params: Vec<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config, vocab_rows);
        if layout.total != params.len() {
            return Err(Error::Checkpoint(format!(
                "payload has {} parameters, architecture needs {}",
                params.len(),
                layout.total
            )));
        }
        Ok(TextCnnModel {
            config,
            vocab_rows,
            init_kind,
            seed,
            layout,
            params,
        })
    }

    pub(crate) fn filters(&self) -> Filters {
        Filters {
            conv1: self
                .layout
                .conv1
                .iter()
                .map(|s| transpose_slot(&self.params, s))
                .collect(),
            conv2: self
                .layout
                .conv2
                .iter()
                .map(|s| transpose_slot(&self.params, s))
                .collect(),
        }
    }

    pub(crate) fn forward_one(
        &self,
        ids: &[u32],
        filters: &Filters,
        act: &mut Activations,
    ) -> Result<()> {
        #[cfg(target_arch = "x86_64")]
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked above.
            return unsafe { self.forward_one_avx2(ids, filters, act) };
        }
        self.forward_one_impl(ids, filters, act)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn forward_one_avx2(
        &self,
        ids: &[u32],
        filters: &Filters,
        act: &mut Activations,
    ) -> Result<()> {
        self.forward_one_impl(ids, filters, act)
    }

    #[inline(always)]
    fn forward_one_impl(
        &self,
        ids: &[u32],
        filters: &Filters,
        act: &mut Activations,
    ) -> Result<()> {
        let cfg = &self.config;
        let d = cfg.embed_dim;
        let len = cfg.max_len;
        if ids.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "sequence length {} but model max_len {len}",
                ids.len()
            )));
        }
        let p = &self.params;

        act.x.clear();
        act.x.resize(len * d, 0.0);
        for (t, &id) in ids.iter().enumerate() {
            if id == PAD_ID {
                continue;
            }
            let id = id as usize;
            if id >= self.vocab_rows {
                return Err(Error::DimensionMismatch(format!(
                    "token id {id} outside vocabulary of {}",
                    self.vocab_rows
                )));
            }
            let src = self.layout.embedding.start + id * d;
            act.x[t * d..(t + 1) * d].copy_from_slice(&p[src..src + d]);
        }

        let c1 = cfg.channels_block1;
        let q_len = cfg.block1_positions();
        let width = cfg.block1_width();
        let n_kernels = cfg.kernel_sizes.len();
        act.pre1.resize(n_kernels, Vec::new());
        act.arg1.resize(n_kernels, Vec::new());
        act.z.clear();
        act.z.resize(q_len * width, 0.0);
        for (ki, slot) in self.layout.conv1.iter().enumerate() {
            let k = slot.kernel;
            // Positions past the last full pooling window never reach the output.
            let positions = 2 * q_len;
            let wt = &filters.conv1[ki];
            let bias = &p[slot.bias.clone()];
            let pre = &mut act.pre1[ki];
            pre.clear();
            pre.resize(positions * c1, 0.0);
            for pos in 0..positions {
                let out = &mut pre[pos * c1..(pos + 1) * c1];
                out.copy_from_slice(bias);
                for r in 0..k {
                    if ids[pos + r] == PAD_ID {
                        continue;
                    }
                    let row = &act.x[(pos + r) * d..(pos + r + 1) * d];
                    accumulate_outputs(out, row, &wt[r * d * c1..(r + 1) * d * c1]);
                }
            }
            check_finite(pre, || format!("conv1[k={k}]"))?;
            let arg = &mut act.arg1[ki];
            arg.clear();
            arg.resize(q_len * c1, 0);
            for q in 0..q_len {
                for c in 0..c1 {
                    let a = pre[2 * q * c1 + c].max(0.0);
                    let b = pre[(2 * q + 1) * c1 + c].max(0.0);
                    let (value, at) = if a >= b { (a, 2 * q) } else { (b, 2 * q + 1) };
                    arg[q * c1 + c] = at as u32;
                    act.z[q * width + ki * c1 + c] = value;
                }
            }
        }

        let c2 = cfg.channels_block2;
        act.pre2.resize(n_kernels, Vec::new());
        act.arg2.resize(n_kernels, Vec::new());
        act.features.clear();
        act.features.resize(cfg.feature_dim(), 0.0);
        for (ki, slot) in self.layout.conv2.iter().enumerate() {
            let k = slot.kernel;
            let positions = q_len - k + 1;
            let flen = slot.filter_len();
            let wt = &filters.conv2[ki];
            let bias = &p[slot.bias.clone()];
            let pre = &mut act.pre2[ki];
            pre.clear();
            pre.resize(positions * c2, 0.0);
            for pos in 0..positions {
                let out = &mut pre[pos * c2..(pos + 1) * c2];
                out.copy_from_slice(bias);
                accumulate_outputs(out, &act.z[pos * width..pos * width + flen], wt);
            }
            check_finite(pre, || format!("conv2[k={k}]"))?;
            let arg = &mut act.arg2[ki];
            arg.clear();
            arg.resize(c2, 0);
            for c in 0..c2 {
                let mut best = 0;
                let mut best_val = pre[c].max(0.0);
                for pos in 1..positions {
                    let v = pre[pos * c2 + c].max(0.0);
                    if v > best_val {
                        best = pos;
                        best_val = v;
                    }
                }
                arg[c] = best as u32;
                act.features[ki * c2 + c] = best_val;
            }
        }

        let classes = cfg.num_classes;
        let fdim = cfg.feature_dim();
        let w = &p[self.layout.dense_weight.clone()];
        let b = &p[self.layout.dense_bias.clone()];
        act.logits.clear();
        act.logits
            .extend((0..classes).map(|j| b[j] + dot(&w[j * fdim..(j + 1) * fdim], &act.features)));
        check_finite(&act.logits, || "dense".to_string())?;
        softmax_into(&act.logits, &mut act.probs);
        Ok(())
    }

    /// Accumulates `scale * d(-ln p[label])/dθ` into `grad`.
    pub(crate) fn backward_one(
        &self,
        ids: &[u32],
        label: usize,
        scale: f64,
        act: &mut Activations,
        grad: &mut [f64],
    ) {
        #[cfg(target_arch = "x86_64")]
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked above.
            return unsafe { self.backward_one_avx2(ids, label, scale, act, grad) };
        }
        self.backward_one_impl(ids, label, scale, act, grad)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn backward_one_avx2(
        &self,
        ids: &[u32],
        label: usize,
        scale: f64,
        act: &mut Activations,
        grad: &mut [f64],
    ) {
        self.backward_one_impl(ids, label, scale, act, grad)
    }

    #[inline(always)]
    fn backward_one_impl(
        &self,
        ids: &[u32],
        label: usize,
        scale: f64,
        act: &mut Activations,
        grad: &mut [f64],
    ) {
        let cfg = &self.config;
        let p = &self.params;
        let d = cfg.embed_dim;
        let classes = cfg.num_classes;
        let fdim = cfg.feature_dim();

        let dlogits: Vec<f64> = act
            .probs
            .iter()
            .enumerate()
            .map(|(j, &pj)| scale * (pj - if j == label { 1.0 } else { 0.0 }))
            .collect();

        let wd = self.layout.dense_weight.clone();
        act.dfeat.clear();
        act.dfeat.resize(fdim, 0.0);
        for (j, &g) in dlogits.iter().enumerate() {
            let row = wd.start + j * fdim;
            axpy(g, &act.features, &mut grad[row..row + fdim]);
            grad[self.layout.dense_bias.start + j] += g;
            axpy(g, &p[row..row + fdim], &mut act.dfeat);
        }
        debug_assert_eq!(dlogits.len(), classes);

        let q_len = cfg.block1_positions();
        let width = cfg.block1_width();
        let c2 = cfg.channels_block2;
        act.dz.clear();
        act.dz.resize(q_len * width, 0.0);
        for (ki, slot) in self.layout.conv2.iter().enumerate() {
            let flen = slot.filter_len();
            for c in 0..c2 {
                let g = act.dfeat[ki * c2 + c];
                let pos = act.arg2[ki][c] as usize;
                if g == 0.0 || act.pre2[ki][pos * c2 + c] <= 0.0 {
                    continue;
                }
                let wrow = slot.weight.start + c * flen;
                let window = pos * width..pos * width + flen;
                axpy(g, &act.z[window.clone()], &mut grad[wrow..wrow + flen]);
                grad[slot.bias.start + c] += g;
                axpy(g, &p[wrow..wrow + flen], &mut act.dz[window]);
            }
        }

        let c1 = cfg.channels_block1;
        act.dx.clear();
        act.dx.resize(cfg.max_len * d, 0.0);
        for (ki, slot) in self.layout.conv1.iter().enumerate() {
            let flen = slot.filter_len();
            for q in 0..q_len {
                for c in 0..c1 {
                    let g = act.dz[q * width + ki * c1 + c];
                    if g == 0.0 {
                        continue;
                    }
                    let pos = act.arg1[ki][q * c1 + c] as usize;
                    if act.pre1[ki][pos * c1 + c] <= 0.0 {
                        continue;
                    }
                    let wrow = slot.weight.start + c * flen;
                    let window = pos * d..pos * d + flen;
                    axpy(g, &act.x[window.clone()], &mut grad[wrow..wrow + flen]);
                    grad[slot.bias.start + c] += g;
                    axpy(g, &p[wrow..wrow + flen], &mut act.dx[window]);
                }
            }
        }

        if cfg.fine_tune_embeddings {
            for (t, &id) in ids.iter().enumerate() {
                if id == PAD_ID {
                    continue;
                }
                let row = self.layout.embedding.start + id as usize * d;
                axpy(1.0, &act.dx[t * d..(t + 1) * d], &mut grad[row..row + d]);
            }
        }
    }

    /// Fingerprint of every ReLU sign and max-pool choice for one input.
    /// Two parameter settings with equal fingerprints lie on the same
    /// linear piece of the network.
    pub(crate) fn activation_pattern(&self, ids: &[u32]) -> Result<u64> {
        let mut act = Activations::default();
        self.forward_one(ids, &self.filters(), &mut act)?;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for (pre, arg) in act
            .pre1
            .iter()
            .zip(&act.arg1)
            .chain(act.pre2.iter().zip(&act.arg2))
        {
            pre.iter().for_each(|&v| mix((v > 0.0) as u64));
            arg.iter().for_each(|&a| mix(a as u64));
        }
        Ok(h)
    }

    /// Class distributions for a batch. Pure; safe to call concurrently.
    pub fn forward(&self, batch: &[TokenIdSequence]) -> Result<Vec<Prediction>> {
        let filters = self.filters();
        batch
            .par_iter()
            .map_init(Activations::default, |act, seq| {
                self.forward_one(&seq.ids, &filters, act)?;
                Ok(Prediction::from_probs(act.probs.clone()))
            })
            .collect()
    }

    pub fn predict(&self, inputs: &[TokenIdSequence]) -> Result<Vec<Prediction>> {
        self.forward(inputs)
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// every parameter (flat, same layout as [`Self::params`]).
    pub fn loss_and_gradients(&self, batch: &[LabeledExample]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_gradients(batch, &mut grad, &mut Activations::default())?;
        Ok((loss, grad))
    }

    pub(crate) fn accumulate_gradients(
        &self,
        batch: &[LabeledExample],
        grad: &mut [f64],
        act: &mut Activations,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        let scale = 1.0 / batch.len() as f64;
        let filters = self.filters();
        let mut loss = 0.0;
        for ex in batch {
            if ex.label >= self.config.num_classes {
                return Err(Error::ClassOutOfRange {
                    index: ex.label as i64,
                    num_classes: self.config.num_classes,
                });
            }
            self.forward_one(&ex.input.ids, &filters, act)?;
            loss -= (act.probs[ex.label].max(f64::MIN_POSITIVE)).ln() * scale;
            self.backward_one(&ex.input.ids, ex.label, scale, act, grad);
        }
        Ok(loss)
    }

    /// Mean cross-entropy only, without gradients.
    pub fn loss(&self, batch: &[LabeledExample]) -> Result<f64> {
        let mut act = Activations::default();
        let filters = self.filters();
        let mut total = 0.0;
        for ex in batch {
            self.forward_one(&ex.input.ids, &filters, &mut act)?;
            total -= log_prob(&act.logits, ex.label);
        }
        Ok(total / batch.len() as f64)
    }
}

fn log_prob(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits[label] - lse
}
