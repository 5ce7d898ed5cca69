use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class F1 with support weighting. `per_class[c]` is `None` when class
/// `c` never occurs in gold or predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: Vec<Option<f64>>,
    pub support: Vec<usize>,
    pub weighted: f64,
    /// `confusion[gold][pred]` for single-label data; per-label
    /// `[[tn, fp], [fn, tp]]` flattened into rows of four for multi-label.
    pub confusion: Vec<Vec<usize>>,
}

impl F1Report {
    pub fn f1(&self, class: usize) -> f64 {
        self.per_class[class].unwrap_or(0.0)
    }
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> Option<f64> {
    if tp + fp + fn_ == 0 {
        return None;
    }
    // 2PR/(P+R) = 2tp/(2tp+fp+fn); zero when tp is zero.
    Some(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

fn weighted(per_class: &[Option<f64>], support: &[usize]) -> f64 {
    let total: usize = support.iter().sum();
    if total == 0 {
        return 0.0;
    }
    per_class
        .iter()
        .zip(support)
        .map(|(f, &s)| f.unwrap_or(0.0) * s as f64)
        .sum::<f64>()
        / total as f64
}

/// One-vs-rest F1 for single-label predictions over `classes` classes.
pub fn single_label_f1(gold: &[usize], pred: &[usize], classes: usize) -> Result<F1Report> {
    if gold.is_empty() {
        return Err(Error::EmptyDataset("test set".into()));
    }
    if gold.len() != pred.len() {
        return Err(Error::dims("predictions", gold.len(), pred.len()));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&g, &p) in gold.iter().zip(pred) {
        confusion[g][p] += 1;
    }
    let mut per_class = Vec::with_capacity(classes);
    let mut support = Vec::with_capacity(classes);
    for c in 0..classes {
        let tp = confusion[c][c];
        let fn_ = confusion[c].iter().sum::<usize>() - tp;
        let fp = (0..classes).map(|g| confusion[g][c]).sum::<usize>() - tp;
        per_class.push(f1_from_counts(tp, fp, fn_));
        support.push(tp + fn_);
    }
    Ok(F1Report {
        weighted: weighted(&per_class, &support),
        per_class,
        support,
        confusion,
    })
}

/// Per-label binary F1 for multi-label predictions (0/1 rows).
pub fn multi_label_f1(gold: &[Vec<bool>], pred: &[Vec<bool>]) -> Result<F1Report> {
    if gold.is_empty() {
        return Err(Error::EmptyDataset("test set".into()));
    }
    if gold.len() != pred.len() {
        return Err(Error::dims("predictions", gold.len(), pred.len()));
    }
    let labels = gold[0].len();
    let mut per_class = Vec::with_capacity(labels);
    let mut support = Vec::with_capacity(labels);
    let mut confusion = Vec::with_capacity(labels);
    for l in 0..labels {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (g, p) in gold.iter().zip(pred) {
            match (g[l], p[l]) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        per_class.push(f1_from_counts(tp, fp, fn_));
        support.push(tp + fn_);
        confusion.push(vec![tn, fp, fn_, tp]);
    }
    Ok(F1Report {
        weighted: weighted(&per_class, &support),
        per_class,
        support,
        confusion,
    })
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}
