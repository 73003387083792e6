use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::seed;
use crate::tokenize::TokenSequence;
use crate::vocab::{Vocabulary, PAD_INDEX};

/// Output classes: index 0 is non-positive, index 1 positive.
pub const N_CLASSES: usize = 2;
pub const POSITIVE_CLASS: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CnnConfig {
    pub n_filters: usize,
    pub kernel_size: usize,
    /// Only stride 1 with valid padding is supported.
    pub stride: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_len: usize,
    pub embedding_dim: usize,
    pub trainable_embeddings: bool,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            n_filters: 600,
            kernel_size: 3,
            stride: 1,
            dropout: 0.5,
            epochs: 20,
            learning_rate: 0.01,
            batch_size: 32,
            max_len: 256,
            embedding_dim: 50,
            trainable_embeddings: false,
            seed: 0,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_filters == 0 || self.kernel_size == 0 || self.embedding_dim == 0 {
            return bad("filters, kernel size and embedding dimension must be positive".into());
        }
        if self.kernel_size > self.max_len {
            return bad(format!(
                "kernel size {} exceeds max_len {}",
                self.kernel_size, self.max_len
            ));
        }
        if self.stride != 1 {
            return bad(format!("stride {} is not supported (only 1)", self.stride));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive".into());
        }
        Ok(())
    }
}

/// Row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextCnnModel {
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingTable,
    /// `n_filters x kernel_size x dim`, row-major.
    pub filters: Vec<f64>,
    pub filter_bias: Vec<f64>,
    /// `N_CLASSES x n_filters`, row-major.
    pub dense_weights: Vec<f64>,
    pub dense_bias: Vec<f64>,
    pub config: CnnConfig,
}

impl TextCnnModel {
    /// Fresh model with Glorot-uniform weights and zero biases, drawn from
    /// the config seed.
    pub fn new(vocab: Vocabulary, mut embeddings: EmbeddingTable, config: CnnConfig) -> Result<Self> {
        config.validate()?;
        embeddings.validate()?;
        if embeddings.dim != config.embedding_dim {
            return Err(Error::DimensionMismatch {
                expected: config.embedding_dim,
                found: embeddings.dim,
            });
        }
        if embeddings.rows() != vocab.dimension() {
            return Err(Error::DimensionMismatch {
                expected: vocab.dimension(),
                found: embeddings.rows(),
            });
        }
        embeddings.trainable = config.trainable_embeddings;
        let (n_f, k, d) = (config.n_filters, config.kernel_size, embeddings.dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[0]));
        let conv_limit = (6.0 / (k * d + n_f) as f64).sqrt();
        let filters = (0..n_f * k * d)
            .map(|_| rng.gen_range(-conv_limit..conv_limit))
            .collect();
        let dense_limit = (6.0 / (n_f + N_CLASSES) as f64).sqrt();
        let dense_weights = (0..N_CLASSES * n_f)
            .map(|_| rng.gen_range(-dense_limit..dense_limit))
            .collect();
        Ok(TextCnnModel {
            vocab,
            embeddings,
            filters,
            filter_bias: vec![0.0; n_f],
            dense_weights,
            dense_bias: vec![0.0; N_CLASSES],
            config,
        })
    }

    pub fn n_filters(&self) -> usize {
        self.config.n_filters
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim
    }

    fn filter(&self, j: usize) -> &[f64] {
        let w = self.config.kernel_size * self.dim();
        &self.filters[j * w..(j + 1) * w]
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.embeddings.validate()?;
        let (n_f, k, d) = (self.n_filters(), self.config.kernel_size, self.dim());
        let shapes = [
            (self.filters.len(), n_f * k * d),
            (self.filter_bias.len(), n_f),
            (self.dense_weights.len(), N_CLASSES * n_f),
            (self.dense_bias.len(), N_CLASSES),
            (self.embeddings.rows(), self.vocab.dimension()),
        ];
        for (found, expected) in shapes {
            if found != expected {
                return Err(Error::DimensionMismatch { expected, found });
            }
        }
        let params = self
            .filters
            .iter()
            .chain(&self.filter_bias)
            .chain(&self.dense_weights)
            .chain(&self.dense_bias);
        if params.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("model holds non-finite parameters".into()));
        }
        Ok(())
    }

    /// Token indices of a sequence, truncated or padded to `max_len`.
    pub fn encode(&self, seq: &TokenSequence) -> Vec<usize> {
        encode_tokens(seq, &self.vocab, self.config.max_len)
    }

    pub fn embed_ids(&self, ids: &[usize]) -> Matrix {
        let d = self.dim();
        let mut m = Matrix::zeros(ids.len(), d);
        for (r, &id) in ids.iter().enumerate() {
            if id != PAD_INDEX {
                m.data[r * d..(r + 1) * d].copy_from_slice(self.embeddings.row(id));
            }
        }
        m
    }
}

pub fn encode_tokens(seq: &TokenSequence, vocab: &Vocabulary, max_len: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = seq
        .tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.lookup(&t.normalized))
        .collect();
    ids.resize(max_len, PAD_INDEX);
    ids
}

/// `max_len x dim` input: token vectors for the first `max_len` tokens,
/// zero rows after.
pub fn embed_document(seq: &TokenSequence, vocab: &Vocabulary, table: &EmbeddingTable, max_len: usize) -> Matrix {
    let ids = encode_tokens(seq, vocab, max_len);
    let d = table.dim;
    let mut m = Matrix::zeros(max_len, d);
    for (r, &id) in ids.iter().enumerate() {
        if id != PAD_INDEX {
            m.data[r * d..(r + 1) * d].copy_from_slice(table.row(id));
        }
    }
    m
}

/// Everything backpropagation needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub feature_len: usize,
    /// First time step attaining each filter's maximum.
    pub argmax: Vec<usize>,
    /// Pre-activation at the argmax step.
    pub preact_at_max: Vec<f64>,
    pub pooled: Vec<f64>,
    /// Per-unit dropout multiplier: 0, `1/(1-p)`, or 1 in eval mode.
    pub mask: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: [f64; N_CLASSES],
    pub probs: [f64; N_CLASSES],
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|z| (z - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|x| x / s)
}

fn log_softmax_at(logits: &[f64; N_CLASSES], class: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits[class] - lse
}

/// Pre-activation feature map, `n_filters x (L - k + 1)`, row-major.
pub fn feature_map(model: &TextCnnModel, input: &Matrix) -> Result<Matrix> {
    let (k, d) = (model.config.kernel_size, model.dim());
    check_input(model, input)?;
    let steps = input.rows - k + 1;
    let mut out = Matrix::zeros(model.n_filters(), steps);
    for j in 0..model.n_filters() {
        let f = model.filter(j);
        for t in 0..steps {
            out.data[j * steps + t] = dot(f, &input.data[t * d..(t + k) * d]) + model.filter_bias[j];
        }
    }
    Ok(out)
}

fn check_input(model: &TextCnnModel, input: &Matrix) -> Result<()> {
    if input.cols != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: input.cols,
        });
    }
    if input.rows < model.config.kernel_size {
        return Err(Error::InvalidArgument(format!(
            "input length {} is shorter than kernel size {}",
            input.rows, model.config.kernel_size
        )));
    }
    Ok(())
}

/// Convolution, ReLU, max-over-time pooling, optional inverted dropout,
/// dense layer and softmax.
pub fn forward(
    model: &TextCnnModel,
    input: &Matrix,
    train_mode: bool,
    rng: &mut dyn RngCore,
) -> Result<([f64; N_CLASSES], ForwardCache)> {
    check_input(model, input)?;
    let (n_f, k, d) = (model.n_filters(), model.config.kernel_size, model.dim());
    let steps = input.rows - k + 1;
    // Windows starting at or after `occupied` read only zero rows, so their
    // pre-activation is the bias.
    let occupied = (0..input.rows)
        .rev()
        .find(|&r| input.row(r).iter().any(|&v| v != 0.0))
        .map_or(0, |r| r + 1);
    let explicit = steps.min(occupied);

    let mut argmax = vec![0usize; n_f];
    let mut preact_at_max = vec![0.0; n_f];
    let mut pooled = vec![0.0; n_f];
    for j in 0..n_f {
        let f = model.filter(j);
        let bias = model.filter_bias[j];
        let mut best = f64::NEG_INFINITY;
        let mut best_t = 0;
        let mut best_z = 0.0;
        for t in 0..explicit {
            let z = dot(f, &input.data[t * d..(t + k) * d]) + bias;
            let a = z.max(0.0);
            if a > best {
                best = a;
                best_t = t;
                best_z = z;
            }
        }
        if steps > explicit {
            let a = bias.max(0.0);
            if a > best {
                best = a;
                best_t = explicit;
                best_z = bias;
            }
        }
        argmax[j] = best_t;
        preact_at_max[j] = best_z;
        pooled[j] = best;
    }

    let p = model.config.dropout;
    let mask: Vec<f64> = if train_mode && p > 0.0 {
        let keep = 1.0 / (1.0 - p);
        (0..n_f)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect()
    } else {
        vec![1.0; n_f]
    };
    let hidden: Vec<f64> = pooled.iter().zip(&mask).map(|(a, m)| a * m).collect();
    let mut logits = [0.0; N_CLASSES];
    for (c, l) in logits.iter_mut().enumerate() {
        *l = dot(&model.dense_weights[c * n_f..(c + 1) * n_f], &hidden) + model.dense_bias[c];
    }
    let probs = softmax(&logits);
    Ok((
        probs,
        ForwardCache {
            feature_len: steps,
            argmax,
            preact_at_max,
            pooled,
            mask,
            hidden,
            logits,
            probs,
        },
    ))
}

/// Dense gradients for every parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnGradients {
    pub filters: Vec<f64>,
    pub filter_bias: Vec<f64>,
    pub dense_weights: Vec<f64>,
    pub dense_bias: Vec<f64>,
    /// Only rows that received gradient; empty when embeddings are frozen.
    pub embeddings: BTreeMap<usize, Vec<f64>>,
}

impl CnnGradients {
    pub fn zeros(model: &TextCnnModel) -> Self {
        CnnGradients {
            filters: vec![0.0; model.filters.len()],
            filter_bias: vec![0.0; model.filter_bias.len()],
            dense_weights: vec![0.0; model.dense_weights.len()],
            dense_bias: vec![0.0; model.dense_bias.len()],
            embeddings: BTreeMap::new(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        let groups = [
            &mut self.filters,
            &mut self.filter_bias,
            &mut self.dense_weights,
            &mut self.dense_bias,
        ];
        for g in groups {
            g.iter_mut().for_each(|v| *v *= s);
        }
        for row in self.embeddings.values_mut() {
            row.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.filters
            .iter()
            .chain(&self.filter_bias)
            .chain(&self.dense_weights)
            .chain(&self.dense_bias)
            .chain(self.embeddings.values().flatten())
            .all(|&v| v == 0.0)
    }
}

/// Backward signal of one example in compact form: the dense-layer error
/// and the pre-activation error at each filter's argmax window.
pub(crate) struct ExampleSignal {
    pub loss: f64,
    pub dlogits: [f64; N_CLASSES],
    pub hidden: Vec<f64>,
    pub argmax: Vec<usize>,
    pub dz: Vec<f64>,
}

pub(crate) fn example_signal(
    model: &TextCnnModel,
    input: &Matrix,
    label: usize,
    train_mode: bool,
    rng: &mut dyn RngCore,
) -> Result<ExampleSignal> {
    if label >= N_CLASSES {
        return Err(Error::InvalidArgument(format!("label {label} is not 0 or 1")));
    }
    let (probs, cache) = forward(model, input, train_mode, rng)?;
    let n_f = model.n_filters();
    let loss = -log_softmax_at(&cache.logits, label);
    let mut dlogits = probs;
    dlogits[label] -= 1.0;
    let dz = (0..n_f)
        .map(|j| {
            if cache.preact_at_max[j] <= 0.0 || cache.mask[j] == 0.0 {
                return 0.0;
            }
            let dh: f64 = (0..N_CLASSES)
                .map(|c| model.dense_weights[c * n_f + j] * dlogits[c])
                .sum();
            dh * cache.mask[j]
        })
        .collect();
    Ok(ExampleSignal {
        loss,
        dlogits,
        hidden: cache.hidden,
        argmax: cache.argmax,
        dz,
    })
}

/// Adds one example's gradient into `grads`.
pub(crate) fn accumulate(
    model: &TextCnnModel,
    input: &Matrix,
    ids: Option<&[usize]>,
    signal: &ExampleSignal,
    grads: &mut CnnGradients,
) {
    let (n_f, k, d) = (model.n_filters(), model.config.kernel_size, model.dim());
    for c in 0..N_CLASSES {
        let g = signal.dlogits[c];
        grads.dense_bias[c] += g;
        for (w, h) in grads.dense_weights[c * n_f..(c + 1) * n_f].iter_mut().zip(&signal.hidden) {
            *w += g * h;
        }
    }
    for j in 0..n_f {
        let dz = signal.dz[j];
        if dz == 0.0 {
            continue;
        }
        let t = signal.argmax[j];
        grads.filter_bias[j] += dz;
        let window = &input.data[t * d..(t + k) * d];
        for (g, x) in grads.filters[j * k * d..(j + 1) * k * d].iter_mut().zip(window) {
            *g += dz * x;
        }
        if let (true, Some(ids)) = (model.embeddings.trainable, ids) {
            let f = model.filter(j);
            for r in 0..k {
                let id = ids[t + r];
                if id == PAD_INDEX {
                    continue;
                }
                let row = grads.embeddings.entry(id).or_insert_with(|| vec![0.0; d]);
                for (g, w) in row.iter_mut().zip(&f[r * d..(r + 1) * d]) {
                    *g += dz * w;
                }
            }
        }
    }
}

/// Cross-entropy loss of one example and its exact gradients.
///
/// `ids` are the token indices behind `input` (as produced by
/// [`TextCnnModel::encode`]); they route gradient into embedding rows when
/// the embeddings are trainable.
pub fn loss_and_gradients(
    model: &TextCnnModel,
    ids: &[usize],
    label: usize,
    train_mode: bool,
    rng: &mut dyn RngCore,
) -> Result<(f64, CnnGradients)> {
    let input = model.embed_ids(ids);
    let signal = example_signal(model, &input, label, train_mode, rng)?;
    let mut grads = CnnGradients::zeros(model);
    accumulate(model, &input, Some(ids), &signal, &mut grads);
    Ok((signal.loss, grads))
}

/// Eval-mode loss of one example.
pub fn example_loss(model: &TextCnnModel, ids: &[usize], label: usize) -> Result<f64> {
    let input = model.embed_ids(ids);
    let (_, cache) = forward(model, &input, false, &mut rand::rngs::mock::StepRng::new(0, 0))?;
    Ok(-log_softmax_at(&cache.logits, label))
}


#[cfg(test)]
pub(crate) use tests::small_model;
