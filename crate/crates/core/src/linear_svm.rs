//! Binary linear SVM trained by stochastic subgradient descent on the
//! regularized hinge loss, step size `1/(lambda t)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DocumentSet, GateLabel, NewsDocument};
use crate::dtm::{Featurizer, SparseVector, Weighting};
use crate::error::{Error, Result};
use crate::seed;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub epochs_trained: usize,
}

impl LinearSvmModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: &SparseVector) -> Result<f64> {
        x.check_dim(self.weights.len())?;
        Ok(x.dot_dense(&self.weights) + self.bias)
    }

    /// `+1` when the score is non-negative, else `-1`.
    pub fn predict(&self, x: &SparseVector) -> Result<i8> {
        Ok(if self.score(x)? >= 0.0 { 1 } else { -1 })
    }
}

pub fn predict(model: &LinearSvmModel, x: &SparseVector) -> Result<i8> {
    model.predict(x)
}

/// `lambda/2 ||w||^2 + mean_i max(0, 1 - y_i (w.x_i + b))`.
pub fn hinge_objective(model: &LinearSvmModel, rows: &[SparseVector], y: &[i8]) -> Result<f64> {
    if rows.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            found: y.len(),
        });
    }
    let reg = 0.5 * model.lambda * model.weights.iter().map(|w| w * w).sum::<f64>();
    if rows.is_empty() {
        return Ok(reg);
    }
    let mut loss = 0.0;
    for (x, &label) in rows.iter().zip(y) {
        loss += (1.0 - f64::from(label) * model.score(x)?).max(0.0);
    }
    Ok(reg + loss / rows.len() as f64)
}

/// Iterate held as `scale * (v, vb)` so the per-step shrink is O(1).
struct ScaledIterate {
    v: Vec<f64>,
    vb: f64,
    scale: f64,
}

impl ScaledIterate {
    fn margin(&self, x: &SparseVector) -> f64 {
        self.scale * (x.dot_dense(&self.v) + self.vb)
    }

    fn shrink(&mut self, factor: f64) {
        if factor == 0.0 {
            self.v.iter_mut().for_each(|w| *w = 0.0);
            self.vb = 0.0;
            self.scale = 1.0;
            return;
        }
        self.scale *= factor;
        if self.scale < 1e-9 {
            let s = self.scale;
            self.v.iter_mut().for_each(|w| *w *= s);
            self.vb *= s;
            self.scale = 1.0;
        }
    }

    fn add(&mut self, x: &SparseVector, step: f64) {
        let c = step / self.scale;
        for &(i, val) in x.entries() {
            self.v[i] += c * val;
        }
        self.vb += c;
    }

    fn materialize(&self) -> (Vec<f64>, f64) {
        (self.v.iter().map(|w| w * self.scale).collect(), self.vb * self.scale)
    }
}

fn check_labels(y: &[i8]) -> Result<()> {
    if y.iter().any(|&l| l != 1 && l != -1) {
        return Err(Error::InvalidArgument("labels must be +1 or -1".into()));
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(Error::Contract("training labels contain a single class".into()));
    }
    Ok(())
}

/// Trains and returns the model together with the best objective seen
/// after each epoch.
///
/// The bias is learned as the weight of a constant feature, so it shares
/// the shrinkage of the other weights during training. At the end of every
/// epoch both the current iterate and the running mean of epoch-end
/// iterates are evaluated; the best one seen so far is what gets returned.
pub fn fit_linear_svm(
    rows: &[SparseVector],
    y: &[i8],
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<(LinearSvmModel, Vec<f64>)> {
    if rows.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            found: y.len(),
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    check_labels(y)?;
    let dim = rows[0].dim();
    for r in rows {
        r.check_dim(dim)?;
    }

    let mut it = ScaledIterate {
        v: vec![0.0; dim],
        vb: 0.0,
        scale: 1.0,
    };
    let mut best = LinearSvmModel {
        weights: vec![0.0; dim],
        bias: 0.0,
        lambda,
        epochs_trained: 0,
    };
    let mut best_obj = hinge_objective(&best, rows, y)?;
    let mut avg_w = vec![0.0; dim];
    let mut avg_b = 0.0;
    let mut trace = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut t = 0usize;

    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[epoch as u64]));
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let label = f64::from(y[i]);
            let violated = label * it.margin(&rows[i]) < 1.0;
            it.shrink(1.0 - 1.0 / t as f64);
            if violated {
                it.add(&rows[i], eta * label);
            }
        }

        let (w, b) = it.materialize();
        let k = (epoch + 1) as f64;
        for (a, x) in avg_w.iter_mut().zip(&w) {
            *a += (x - *a) / k;
        }
        avg_b += (b - avg_b) / k;
        for (weights, bias) in [(w, b), (avg_w.clone(), avg_b)] {
            let candidate = LinearSvmModel {
                weights,
                bias,
                lambda,
                epochs_trained: epoch + 1,
            };
            let obj = hinge_objective(&candidate, rows, y)?;
            if obj < best_obj {
                best_obj = obj;
                best = candidate;
            }
        }
        trace.push(best_obj);
    }
    best.epochs_trained = epochs;
    Ok((best, trace))
}

pub fn train_linear_svm(
    rows: &[SparseVector],
    y: &[i8],
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearSvmModel> {
    fit_linear_svm(rows, y, lambda, epochs, seed).map(|(m, _)| m)
}

/// Linear SVM over document-term vectors; a non-negative score is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DtmSvmClassifier {
    pub features: Featurizer,
    pub svm: LinearSvmModel,
}

impl DtmSvmClassifier {
    /// Fits the featurizer and the SVM on labeled documents (gold label,
    /// else weak label).
    pub fn fit(
        docs: &DocumentSet,
        vocab: Vocabulary,
        weighting: Weighting,
        lambda: f64,
        epochs: usize,
        seed: u64,
    ) -> Result<(Self, Vec<f64>)> {
        let y = signed_labels(docs)?;
        let features = Featurizer::fit(docs, vocab, weighting, true)?;
        let rows = features.transform(docs);
        let (svm, trace) = fit_linear_svm(&rows, &y, lambda, epochs, seed)?;
        Ok((DtmSvmClassifier { features, svm }, trace))
    }

    pub fn score_document(&self, doc: &NewsDocument) -> Result<f64> {
        self.svm.score(&self.features.vector(&doc.text()))
    }

    /// Label and a logistic squashing of the margin as confidence in it.
    pub fn predict_document(&self, doc: &NewsDocument) -> Result<(GateLabel, f64)> {
        let s = self.score_document(doc)?;
        let p = 1.0 / (1.0 + (-s).exp());
        Ok(if s >= 0.0 {
            (GateLabel::Positive, p)
        } else {
            (GateLabel::NonPositive, 1.0 - p)
        })
    }
}

/// +1 for positive documents, -1 otherwise; errors on unlabeled ones.
pub fn signed_labels(docs: &DocumentSet) -> Result<Vec<i8>> {
    docs.iter()
        .map(|d| match d.is_positive() {
            Some(true) => Ok(1),
            Some(false) => Ok(-1),
            None => Err(Error::Contract(format!("document {:?} has no label", d.id))),
        })
        .collect()
}
