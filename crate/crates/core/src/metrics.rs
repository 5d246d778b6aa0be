//! Binary classification metrics. Class 1 is the positive class throughout.

use crate::error::{Error, Result};

pub const POSITIVE_CLASS: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub roc_auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Set when no sample was predicted positive; precision is then reported as 0.
    pub no_positive_predictions: bool,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "model,accuracy,roc_auc,precision,recall,f_measure";

    pub fn csv_row(&self, name: &str) -> String {
        format!(
            "{name},{:.4},{:.4},{:.4},{:.4},{:.4}",
            self.accuracy, self.roc_auc, self.precision, self.recall, self.f_measure
        )
    }
}

/// Rank-based (Mann–Whitney) ROC AUC; tied scores share their average rank.
pub fn roc_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            op: "roc_auc",
            left: (scores.len(), 1),
            right: (labels.len(), 1),
        });
    }
    let positives = labels.iter().filter(|&&l| l == POSITIVE_CLASS).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass("ROC AUC"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their mean.
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == POSITIVE_CLASS {
                positive_rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// `predictions` are hard class labels; `scores` rank samples by how
/// positive they look (used for ROC AUC only).
pub fn evaluate(predictions: &[usize], scores: &[f64], labels: &[usize]) -> Result<MetricsReport> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            op: "evaluate",
            left: (predictions.len(), 1),
            right: (labels.len(), 1),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if labels.iter().chain(predictions).any(|&l| l > 1) {
        return Err(Error::Invalid("evaluate expects binary labels".into()));
    }
    let roc_auc = roc_auc(scores, labels)?;
    let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        correct += usize::from(p == l);
        match (p == POSITIVE_CLASS, l == POSITIVE_CLASS) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let no_positive_predictions = tp + fp == 0;
    let precision = if no_positive_predictions {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = tp as f64 / (tp + fneg) as f64;
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricsReport {
        accuracy: correct as f64 / labels.len() as f64,
        roc_auc,
        precision,
        recall,
        f_measure,
        no_positive_predictions,
    })
}
