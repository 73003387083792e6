//! Central-difference verification of the analytic gradients.

use rand::rngs::mock::StepRng;

use super::model::{example_loss, loss_and_gradients, CnnGradients, TextCnnModel};
use super::train::Example;
use crate::error::{Error, Result};
use crate::vocab::PAD_INDEX;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub group: &'static str,
    pub parameters: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
    pub max_relative_error: f64,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

enum Group {
    Filters,
    FilterBias,
    DenseWeights,
    DenseBias,
    Embedding(usize),
}

fn params_mut<'a>(model: &'a mut TextCnnModel, g: &Group) -> &'a mut [f64] {
    match *g {
        Group::Filters => &mut model.filters,
        Group::FilterBias => &mut model.filter_bias,
        Group::DenseWeights => &mut model.dense_weights,
        Group::DenseBias => &mut model.dense_bias,
        Group::Embedding(row) => model.embeddings.row_mut(row),
    }
}

fn analytic<'a>(grads: &'a CnnGradients, g: &Group, zeros: &'a [f64]) -> &'a [f64] {
    match *g {
        Group::Filters => &grads.filters,
        Group::FilterBias => &grads.filter_bias,
        Group::DenseWeights => &grads.dense_weights,
        Group::DenseBias => &grads.dense_bias,
        Group::Embedding(row) => grads.embeddings.get(&row).map_or(zeros, Vec::as_slice),
    }
}

/// Compares every analytic partial derivative of the eval-mode loss against
/// `(L(theta + eps) - L(theta - eps)) / (2 eps)`. Embedding rows are checked
/// when the table is trainable, for each distinct non-padding token of the
/// example.
pub fn gradient_check(model: &TextCnnModel, example: &Example, epsilon: f64) -> Result<GradCheckReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let (_, grads) = loss_and_gradients(model, &example.ids, example.label, false, &mut StepRng::new(0, 0))?;
    let mut groups = vec![
        ("filters", Group::Filters),
        ("filter_bias", Group::FilterBias),
        ("dense_weights", Group::DenseWeights),
        ("dense_bias", Group::DenseBias),
    ];
    if model.embeddings.trainable {
        let mut rows: Vec<usize> = example.ids.iter().copied().filter(|&i| i != PAD_INDEX).collect();
        rows.sort_unstable();
        rows.dedup();
        groups.extend(rows.into_iter().map(|r| ("embeddings", Group::Embedding(r))));
    }

    let zeros = vec![0.0; model.dim()];
    let mut probe = model.clone();
    let mut report: Vec<GroupCheck> = Vec::new();
    for (name, group) in &groups {
        let exact = analytic(&grads, group, &zeros).to_vec();
        let mut worst = 0.0f64;
        for (p, &a) in exact.iter().enumerate() {
            let original = params_mut(&mut probe, group)[p];
            params_mut(&mut probe, group)[p] = original + epsilon;
            let plus = example_loss(&probe, &example.ids, example.label)?;
            params_mut(&mut probe, group)[p] = original - epsilon;
            let minus = example_loss(&probe, &example.ids, example.label)?;
            params_mut(&mut probe, group)[p] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(a, numeric));
        }
        match report.iter_mut().find(|g| g.group == *name) {
            Some(existing) => {
                existing.parameters += exact.len();
                existing.max_relative_error = existing.max_relative_error.max(worst);
            }
            None => report.push(GroupCheck {
                group: name,
                parameters: exact.len(),
                max_relative_error: worst,
            }),
        }
    }
    let max_relative_error = report.iter().map(|g| g.max_relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        groups: report,
        max_relative_error,
    })
}
