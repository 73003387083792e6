use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{accumulate, example_signal, forward, CnnGradients, TextCnnModel, N_CLASSES, POSITIVE_CLASS};
use crate::corpus::{DocumentSet, GateLabel, NewsDocument};
use crate::error::{Error, Result};
use crate::seed;
use crate::tokenize::tokenize;
use crate::vocab::PAD_INDEX;

/// Encoded training example: padded token indices and class (1 = positive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub ids: Vec<usize>,
    pub label: usize,
}

impl Example {
    pub fn from_document(model: &TextCnnModel, doc: &NewsDocument, positive: bool) -> Self {
        Example {
            ids: model.encode(&tokenize(&doc.text())),
            label: usize::from(positive),
        }
    }
}

/// Encodes labeled documents; errors if any document has no label.
pub fn encode_documents(model: &TextCnnModel, docs: &DocumentSet) -> Result<Vec<Example>> {
    docs.iter()
        .map(|d| {
            let positive = d
                .is_positive()
                .ok_or_else(|| Error::Contract(format!("document {:?} has no label", d.id)))?;
            Ok(Example::from_document(model, d, positive))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub valid_accuracy: Option<f64>,
}

fn apply_update(model: &mut TextCnnModel, grads: &CnnGradients, lr: f64) {
    let pairs = [
        (&mut model.filters, &grads.filters),
        (&mut model.filter_bias, &grads.filter_bias),
        (&mut model.dense_weights, &grads.dense_weights),
        (&mut model.dense_bias, &grads.dense_bias),
    ];
    for (params, g) in pairs {
        for (p, g) in params.iter_mut().zip(g) {
            *p -= lr * g;
        }
    }
    if model.embeddings.trainable {
        for (&row, g) in &grads.embeddings {
            if row == PAD_INDEX {
                continue;
            }
            for (p, g) in model.embeddings.row_mut(row).iter_mut().zip(g) {
                *p -= lr * g;
            }
        }
    }
}

/// Eval-mode class of each example.
pub fn predict_examples(model: &TextCnnModel, examples: &[Example]) -> Result<Vec<(usize, f64)>> {
    examples
        .par_iter()
        .map(|ex| predict_ids(model, &ex.ids))
        .collect()
}

pub fn accuracy(model: &TextCnnModel, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let preds = predict_examples(model, examples)?;
    let correct = preds.iter().zip(examples).filter(|(p, ex)| p.0 == ex.label).count();
    Ok(correct as f64 / examples.len() as f64)
}

/// Mini-batch SGD with per-epoch shuffling and dropout during training.
///
/// Per-example gradients in a batch are computed in parallel and summed in
/// batch order, so results depend only on the config seed. Each example's
/// dropout stream is derived from (seed, epoch, example index).
pub fn train(
    mut model: TextCnnModel,
    train_set: &[Example],
    valid_set: &[Example],
) -> Result<(TextCnnModel, TrainHistory)> {
    model.validate()?;
    let has = |c: usize| train_set.iter().any(|e| e.label == c);
    if !(0..N_CLASSES).all(has) {
        return Err(Error::Contract("training set contains a single class".into()));
    }
    for ex in train_set.iter().chain(valid_set) {
        if ex.ids.len() != model.config.max_len || ex.label >= N_CLASSES {
            return Err(Error::InvalidArgument("example is not encoded for this model".into()));
        }
    }
    let cfg = model.config.clone();
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok((model, history));
    }

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[1, epoch as u64]));
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let current = &model;
            let signals = batch
                .par_iter()
                .map(|&i| {
                    let ex = &train_set[i];
                    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[2, epoch as u64, i as u64]));
                    let input = current.embed_ids(&ex.ids);
                    let signal = example_signal(current, &input, ex.label, true, &mut rng)?;
                    Ok((input, signal))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grads = CnnGradients::zeros(&model);
            for (&i, (input, signal)) in batch.iter().zip(&signals) {
                loss_sum += signal.loss;
                accumulate(&model, input, Some(&train_set[i].ids), signal, &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            apply_update(&mut model, &grads, cfg.learning_rate);
        }
        history.epochs.push(EpochStats {
            mean_loss: loss_sum / train_set.len() as f64,
            train_accuracy: accuracy(&model, train_set)?,
        });
    }
    if !valid_set.is_empty() {
        history.valid_accuracy = Some(accuracy(&model, valid_set)?);
    }
    Ok((model, history))
}

/// Eval-mode prediction: (class, probability of that class).
pub fn predict_ids(model: &TextCnnModel, ids: &[usize]) -> Result<(usize, f64)> {
    let input = model.embed_ids(ids);
    let (probs, _) = forward(model, &input, false, &mut rand::rngs::mock::StepRng::new(0, 0))?;
    Ok(if probs[POSITIVE_CLASS] > probs[1 - POSITIVE_CLASS] {
        (POSITIVE_CLASS, probs[POSITIVE_CLASS])
    } else {
        (1 - POSITIVE_CLASS, probs[1 - POSITIVE_CLASS])
    })
}

/// Classifies a document; confidence is the winning class probability.
pub fn predict(model: &TextCnnModel, doc: &NewsDocument) -> Result<(GateLabel, f64)> {
    let ids = model.encode(&tokenize(&doc.text()));
    let (class, p) = predict_ids(model, &ids)?;
    let label = if class == POSITIVE_CLASS {
        GateLabel::Positive
    } else {
        GateLabel::NonPositive
    };
    Ok((label, p))
}
