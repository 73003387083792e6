//! One-class nu-SVM with an RBF kernel.
//!
//! The dual is
//!
//! ```text
//! min  1/2 sum_ij a_i a_j K_ij
//! s.t. 0 <= a_i <= 1/(nu l),  sum_i a_i = 1
//! ```
//!
//! and is solved by pairwise updates that move mass between two
//! coefficients (so the equality constraint holds at every step), with
//! second-order working-set selection over a cached kernel matrix.

use rayon::prelude::*;

use crate::corpus::{DocumentSet, NewsDocument};
use crate::dtm::{Featurizer, SparseVector};
use crate::error::{Error, Result};
use crate::eval::kfold_indices;
use crate::seed;

pub fn rbf_kernel(u: &SparseVector, v: &SparseVector, gamma: f64) -> Result<f64> {
    v.check_dim(u.dim())?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    Ok((-gamma * u.squared_distance(v)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Stop once the largest KKT violation is at most this.
    pub tol: f64,
    /// Iteration budget in units of the training-set size.
    pub max_passes: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            tol: 1e-6,
            max_passes: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneClassSvmModel {
    pub support_vectors: Vec<SparseVector>,
    pub coefficients: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub nu: f64,
    pub train_size: usize,
    pub dim: usize,
}

/// Dual solution over a precomputed kernel.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub objective: f64,
    pub iterations: usize,
    pub max_violation: f64,
    /// Upper box bound `1/(nu l)`.
    pub upper: f64,
}

/// Checks `nu` against the training size and returns the box bound.
pub fn box_bound(nu: f64, l: usize) -> Result<f64> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidArgument(format!("nu must lie in (0, 1], got {nu}")));
    }
    if l == 0 {
        return Err(Error::InvalidArgument("one-class training set is empty".into()));
    }
    // Box [0, 1/(nu l)] admits sum = 1 only when nu l >= 1.
    if nu * (l as f64) < 1.0 - 1e-12 {
        return Err(Error::Contract(format!(
            "nu * l = {:.4} < 1: the constraints are infeasible; use a larger nu or more than {l} training documents",
            nu * l as f64
        )));
    }
    Ok((1.0 / (nu * l as f64)).min(1.0))
}

/// Solves the dual for a row-major `l x l` kernel matrix.
pub fn solve_dual(kernel: &[f64], l: usize, nu: f64, params: SolverParams) -> Result<DualSolution> {
    assert_eq!(kernel.len(), l * l, "kernel must be l x l");
    let upper = box_bound(nu, l)?;
    let k = |i: usize, j: usize| kernel[i * l + j];

    // Feasible start: fill coefficients to the bound in order.
    let mut alpha = vec![0.0; l];
    let mut remaining = 1.0f64;
    for a in alpha.iter_mut() {
        if remaining <= upper * 1e-12 {
            break;
        }
        let take = if remaining < upper { remaining } else { upper };
        *a = take;
        remaining -= take;
    }

    let mut grad: Vec<f64> = (0..l)
        .map(|i| (0..l).filter(|&j| alpha[j] > 0.0).map(|j| k(i, j) * alpha[j]).sum())
        .collect();

    let budget = params.max_passes.saturating_mul(l).max(1);
    let mut iterations = 0;
    let mut max_violation;
    loop {
        // i: coefficient that may grow, with the smallest gradient.
        let mut i_up = None;
        let mut g_min = f64::INFINITY;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..l {
            if alpha[t] < upper && grad[t] < g_min {
                g_min = grad[t];
                i_up = Some(t);
            }
            if alpha[t] > 0.0 && grad[t] > g_max {
                g_max = grad[t];
            }
        }
        max_violation = (g_max - g_min).max(0.0);
        let Some(i) = i_up else { break };
        if max_violation <= params.tol || iterations >= budget {
            break;
        }

        // j: coefficient that may shrink, chosen by second-order gain.
        let mut j_low = None;
        let mut best_gain = f64::NEG_INFINITY;
        for t in 0..l {
            if alpha[t] > 0.0 && t != i {
                let b = grad[t] - g_min;
                if b > 0.0 {
                    let a = (k(i, i) + k(t, t) - 2.0 * k(i, t)).max(1e-12);
                    let gain = b * b / a;
                    if gain > best_gain {
                        best_gain = gain;
                        j_low = Some(t);
                    }
                }
            }
        }
        let Some(j) = j_low else { break };

        let curvature = (k(i, i) + k(j, j) - 2.0 * k(i, j)).max(1e-12);
        let step = (grad[j] - grad[i]) / curvature;
        let room_i = upper - alpha[i];
        let room_j = alpha[j];
        let t = step.min(room_i).min(room_j);
        if t == room_i {
            alpha[i] = upper;
        } else {
            alpha[i] += t;
        }
        if t == room_j {
            alpha[j] = 0.0;
        } else {
            alpha[j] -= t;
        }
        for (r, g) in grad.iter_mut().enumerate() {
            *g += t * (k(r, i) - k(r, j));
        }
        iterations += 1;
    }

    let free: Vec<usize> = (0..l).filter(|&t| alpha[t] > 0.0 && alpha[t] < upper).collect();
    let pool: Vec<usize> = if free.is_empty() {
        (0..l).filter(|&t| alpha[t] > 0.0).collect()
    } else {
        free
    };
    let rho = pool.iter().map(|&t| grad[t]).sum::<f64>() / pool.len() as f64;
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();

    Ok(DualSolution {
        alpha,
        rho,
        objective,
        iterations,
        max_violation,
        upper,
    })
}

fn check_dims(data: &[SparseVector]) -> Result<usize> {
    let dim = data.first().map(SparseVector::dim).unwrap_or(0);
    for v in data {
        v.check_dim(dim)?;
    }
    Ok(dim)
}

/// Row-major matrix of pairwise squared distances.
fn squared_distances(data: &[SparseVector], idx: &[usize]) -> Vec<f64> {
    let m = idx.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|a| {
            (0..m)
                .map(|b| data[idx[a]].squared_distance(&data[idx[b]]))
                .collect()
        })
        .collect();
    rows.concat()
}

pub fn rbf_matrix(data: &[SparseVector], gamma: f64) -> Vec<f64> {
    let idx: Vec<usize> = (0..data.len()).collect();
    squared_distances(data, &idx)
        .into_iter()
        .map(|d| (-gamma * d).exp())
        .collect()
}

/// Trains and also returns the full dual solution (every coefficient,
/// objective, iteration count).
pub fn fit_one_class(
    data: &[SparseVector],
    nu: f64,
    gamma: f64,
    params: SolverParams,
) -> Result<(OneClassSvmModel, DualSolution)> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    box_bound(nu, data.len())?;
    let dim = check_dims(data)?;
    let kernel = rbf_matrix(data, gamma);
    let sol = solve_dual(&kernel, data.len(), nu, params)?;
    let (support_vectors, coefficients) = data
        .iter()
        .zip(&sol.alpha)
        .filter(|(_, &a)| a > 0.0)
        .map(|(x, &a)| (x.clone(), a))
        .unzip();
    let model = OneClassSvmModel {
        support_vectors,
        coefficients,
        rho: sol.rho,
        gamma,
        nu,
        train_size: data.len(),
        dim,
    };
    Ok((model, sol))
}

pub fn train_one_class(
    data: &[SparseVector],
    nu: f64,
    gamma: f64,
    tol: f64,
    max_passes: usize,
) -> Result<OneClassSvmModel> {
    fit_one_class(data, nu, gamma, SolverParams { tol, max_passes }).map(|(m, _)| m)
}

impl OneClassSvmModel {
    /// `sum_j a_j K(x_j, v) - rho`; non-negative means `v` looks like the
    /// training distribution.
    pub fn decision(&self, v: &SparseVector) -> Result<f64> {
        v.check_dim(self.dim)?;
        let s: f64 = self
            .support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(x, a)| a * (-self.gamma * x.squared_distance(v)).exp())
            .sum();
        Ok(s - self.rho)
    }
}

pub fn decision(model: &OneClassSvmModel, v: &SparseVector) -> Result<f64> {
    model.decision(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolSplit {
    pub kept: DocumentSet,
    pub quarantined: DocumentSet,
    /// Decision value of every input document, in input order.
    pub decisions: Vec<f64>,
}

/// Quarantines documents whose decision value is at least `margin`; both
/// outputs keep input order.
pub fn filter_positive_pool(
    model: &OneClassSvmModel,
    positives: &DocumentSet,
    vectors: &[SparseVector],
    margin: f64,
) -> Result<PoolSplit> {
    if vectors.len() != positives.len() {
        return Err(Error::DimensionMismatch {
            expected: positives.len(),
            found: vectors.len(),
        });
    }
    let decisions: Vec<f64> = vectors
        .par_iter()
        .map(|v| model.decision(v))
        .collect::<Result<_>>()?;
    let (mut kept, mut quarantined): (Vec<NewsDocument>, Vec<NewsDocument>) = (Vec::new(), Vec::new());
    for (doc, &d) in positives.iter().zip(&decisions) {
        if d >= margin {
            quarantined.push(doc.clone());
        } else {
            kept.push(doc.clone());
        }
    }
    let wrap = |documents| DocumentSet {
        documents,
        provenance: positives.provenance.clone(),
    };
    Ok(PoolSplit {
        kept: wrap(kept),
        quarantined: wrap(quarantined),
        decisions,
    })
}

/// A trained one-class model with the featurizer that produced its inputs
/// and the quarantine margin.
#[derive(Debug, Clone, PartialEq)]
pub struct OneClassFilter {
    pub features: Featurizer,
    pub model: OneClassSvmModel,
    pub margin: f64,
}

impl OneClassFilter {
    pub fn split(&self, positives: &DocumentSet) -> Result<PoolSplit> {
        filter_positive_pool(&self.model, positives, &self.features.transform(positives), self.margin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvSearchResult {
    /// (nu, gamma) cells in the order given.
    pub grid: Vec<(f64, f64)>,
    /// Per cell, `repeats * folds` scores, repeat-major.
    pub scores: Vec<Vec<f64>>,
    pub mean_scores: Vec<f64>,
    pub selected: (f64, f64),
    pub criterion_value: f64,
    pub folds: usize,
    pub repeats: usize,
    pub fits: usize,
}

/// Repeated k-fold search over (nu, gamma).
///
/// Each fit trains on the other folds and scores the held-out fold by
/// `|accepted fraction - (1 - nu)|`, where accepted means decision >= 0.
/// The cell with the smallest mean score wins; ties go to the smaller
/// gamma, then the smaller nu. A fit whose fold is too small for its nu
/// scores infinity.
pub fn cv_grid_search(
    negatives: &[SparseVector],
    grid: &[(f64, f64)],
    folds: usize,
    repeats: usize,
    seed: u64,
    params: SolverParams,
) -> Result<CvSearchResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("hyperparameter grid is empty".into()));
    }
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    for &(nu, gamma) in grid {
        if !(nu > 0.0 && nu <= 1.0) || !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid grid cell nu={nu} gamma={gamma}")));
        }
    }
    let l = negatives.len();
    if l < folds {
        return Err(Error::Contract(format!(
            "{l} training documents is fewer than {folds} folds"
        )));
    }
    check_dims(negatives)?;

    let splits: Vec<Vec<Vec<usize>>> = (0..repeats)
        .map(|r| kfold_indices::<u8>(l, folds, seed::derive(seed, &[r as u64]), None))
        .collect::<Result<_>>()?;
    let all: Vec<usize> = (0..l).collect();
    let dist = squared_distances(negatives, &all);

    let jobs: Vec<(usize, usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..repeats).flat_map(move |r| (0..folds).map(move |f| (c, r, f))))
        .collect();
    let scores_flat: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, r, f)| {
            let (nu, gamma) = grid[c];
            let held = &splits[r][f];
            let mut is_held = vec![false; l];
            held.iter().for_each(|&i| is_held[i] = true);
            let train: Vec<usize> = (0..l).filter(|&i| !is_held[i]).collect();
            let m = train.len();
            if box_bound(nu, m).is_err() {
                return Ok(f64::INFINITY);
            }
            let mut kernel = vec![0.0; m * m];
            for (a, &ia) in train.iter().enumerate() {
                for (b, &ib) in train.iter().enumerate() {
                    kernel[a * m + b] = (-gamma * dist[ia * l + ib]).exp();
                }
            }
            let sol = solve_dual(&kernel, m, nu, params)?;
            let accepted = held
                .iter()
                .filter(|&&h| {
                    let s: f64 = train
                        .iter()
                        .zip(&sol.alpha)
                        .filter(|(_, &a)| a > 0.0)
                        .map(|(&t, &a)| a * (-gamma * dist[t * l + h]).exp())
                        .sum();
                    s - sol.rho >= 0.0
                })
                .count();
            let rate = accepted as f64 / held.len() as f64;
            Ok((rate - (1.0 - nu)).abs())
        })
        .collect::<Result<_>>()?;

    let per_cell = repeats * folds;
    let scores: Vec<Vec<f64>> = scores_flat.chunks(per_cell).map(<[f64]>::to_vec).collect();
    let mean_scores: Vec<f64> = scores
        .iter()
        .map(|s| s.iter().sum::<f64>() / per_cell as f64)
        .collect();

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| {
        grid[a].1
            .total_cmp(&grid[b].1)
            .then(grid[a].0.total_cmp(&grid[b].0))
    });
    let mut best = order[0];
    for &c in &order[1..] {
        if mean_scores[c] < mean_scores[best] {
            best = c;
        }
    }
    if !mean_scores[best].is_finite() {
        return Err(Error::Contract(format!(
            "no grid cell is feasible with {l} training documents and {folds} folds; use larger nu values"
        )));
    }
    Ok(CvSearchResult {
        grid: grid.to_vec(),
        scores,
        mean_scores: mean_scores.clone(),
        selected: grid[best],
        criterion_value: mean_scores[best],
        folds,
        repeats,
        fits: jobs.len(),
    })
}
