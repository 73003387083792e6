//! Confusion matrices, classification metrics and k-fold index generation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Square count matrix; rows are gold classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn confusion_matrix<T: PartialEq + std::fmt::Debug>(
    gold: &[T],
    pred: &[T],
    classes: &[(T, &str)],
) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            found: pred.len(),
        });
    }
    let position = |v: &T| {
        classes
            .iter()
            .position(|(c, _)| c == v)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown class {v:?}")))
    };
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (g, p) in gold.iter().zip(pred) {
        counts[position(g)?][position(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.iter().map(|(_, n)| n.to_string()).collect(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when the metric had a zero denominator and was reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n: u64,
    pub accuracy: f64,
    pub accuracy_undefined: bool,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metrics_from_confusion(confusion: &ConfusionMatrix) -> Result<EvalReport> {
    let k = confusion.classes.len();
    if confusion.counts.len() != k || confusion.counts.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument("confusion matrix must be square".into()));
    }
    let n = confusion.total();
    let trace: u64 = (0..k).map(|i| confusion.counts[i][i]).sum();
    let (accuracy, accuracy_undefined) = ratio(trace, n);
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|i| {
            let tp = confusion.counts[i][i];
            let row: u64 = confusion.counts[i].iter().sum();
            let col: u64 = confusion.counts.iter().map(|r| r[i]).sum();
            let (precision, precision_undefined) = ratio(tp, col);
            let (recall, recall_undefined) = ratio(tp, row);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                name: confusion.classes[i].clone(),
                precision,
                recall,
                f1,
                precision_undefined,
                recall_undefined,
            }
        })
        .collect();
    let macro_f1 = if k == 0 {
        0.0
    } else {
        per_class.iter().map(|c| c.f1).sum::<f64>() / k as f64
    };
    Ok(EvalReport {
        n,
        accuracy,
        accuracy_undefined,
        macro_f1,
        per_class,
        confusion: confusion.clone(),
    })
}

impl EvalReport {
    /// Flat `key=value` text followed by the confusion rows. Key order is
    /// fixed so reports can be diffed.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "n={}", self.n).unwrap();
        writeln!(out, "accuracy={:.6}", self.accuracy).unwrap();
        if self.accuracy_undefined {
            writeln!(out, "accuracy_undefined=true").unwrap();
        }
        writeln!(out, "macro_f1={:.6}", self.macro_f1).unwrap();
        for c in &self.per_class {
            writeln!(out, "{}.precision={:.6}", c.name, c.precision).unwrap();
            writeln!(out, "{}.recall={:.6}", c.name, c.recall).unwrap();
            writeln!(out, "{}.f1={:.6}", c.name, c.f1).unwrap();
            if c.precision_undefined {
                writeln!(out, "{}.precision_undefined=true", c.name).unwrap();
            }
            if c.recall_undefined {
                writeln!(out, "{}.recall_undefined=true", c.name).unwrap();
            }
        }
        writeln!(out, "classes={}", self.confusion.classes.join(",")).unwrap();
        writeln!(out, "confusion=").unwrap();
        for row in &self.confusion.counts {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            writeln!(out, "{}", cells.join(" ")).unwrap();
        }
        out
    }

    /// Reads the `key=value` part of [`EvalReport::to_text`] back.
    pub fn parse_values(text: &str) -> BTreeMap<String, String> {
        text.lines()
            .take_while(|l| *l != "confusion=")
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }
}

/// Splits `0..n` into `k` disjoint folds whose sizes differ by at most one.
///
/// Indices are shuffled with a seeded stream; with `strata` each stratum is
/// shuffled separately and the strata are concatenated in key order before
/// being dealt round-robin, which keeps every fold's class mix balanced.
/// Each fold is returned sorted.
pub fn kfold_indices<S: Ord + Clone>(
    n: usize,
    k: usize,
    seed: u64,
    strata: Option<&[S]>,
) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!(
            "cannot make {k} folds from {n} items"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = match strata {
        Some(s) => {
            if s.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: s.len(),
                });
            }
            let mut groups: BTreeMap<S, Vec<usize>> = BTreeMap::new();
            for (i, key) in s.iter().enumerate() {
                groups.entry(key.clone()).or_default().push(i);
            }
            groups
                .into_values()
                .flat_map(|mut g| {
                    g.shuffle(&mut rng);
                    g
                })
                .collect()
        }
        None => {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            all
        }
    };
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}
