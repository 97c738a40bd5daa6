//! Confusion-matrix metrics, rank AUC, and fold aggregation.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Cells of the binary confusion matrix (rows actual, columns predicted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionCounts> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Input(format!(
            "confusion: {} labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Input("confusion: no instances".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == 1, p == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `(precision, recall, f1)`; each degenerate denominator yields 0.
pub fn precision_recall_f1(c: &ConfusionCounts) -> (f64, f64, f64) {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    };
    (precision, recall, f1)
}

/// Rank-based AUC (Mann–Whitney U over P·N), ties receive half credit.
///
/// Ranks are accumulated doubled in integer arithmetic so the result is the
/// exact rational `2U / 2PN` rounded once.
pub fn auc<T: Scalar>(y_true: &[u8], scores: &[T]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::Input("auc: labels and scores differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Input("auc: NaN score".into()));
    }
    let pos = y_true.iter().filter(|&&y| y == 1).count() as u128;
    let neg = y_true.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share the midrank (i + 1 + j) / 2
        let doubled_mid = (i + 1 + j) as u128;
        let positives = order[i..j].iter().filter(|&&k| y_true[k] == 1).count() as u128;
        doubled_rank_sum += doubled_mid * positives;
        i = j;
    }
    let doubled_u = doubled_rank_sum - pos * (pos + 1);
    Ok(doubled_u as f64 / (2 * pos * neg) as f64)
}

/// Metrics for one test fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub fold_index: usize,
    pub repeat_index: usize,
}

/// Which of the four fold metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Precision,
    Recall,
    F1,
    Auc,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Precision, Metric::Recall, Metric::F1, Metric::Auc];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
            Metric::Auc => "auc",
        }
    }
}

impl FoldMetrics {
    /// Scores a fold from true labels and positive-class probabilities.
    pub fn evaluate(y_true: &[u8], proba: &[f64], fold_index: usize, repeat_index: usize) -> Result<Self> {
        let pred: Vec<u8> = proba.iter().map(|&p| crate::tree::label_from_proba(p)).collect();
        let (precision, recall, f1) = precision_recall_f1(&confusion(y_true, &pred)?);
        Ok(Self {
            precision,
            recall,
            f1,
            auc: auc(y_true, proba)?,
            fold_index,
            repeat_index,
        })
    }

    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
            Metric::Auc => self.auc,
        }
    }
}

/// Mean and Bessel-corrected standard deviation (absent below two values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: Option<f64>,
    pub count: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    Some(Summary {
        mean,
        std,
        count: values.len(),
    })
}

/// Per-metric summaries over all fold × repeat entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
    pub auc: Summary,
}

impl Aggregate {
    pub fn get(&self, m: Metric) -> &Summary {
        match m {
            Metric::Precision => &self.precision,
            Metric::Recall => &self.recall,
            Metric::F1 => &self.f1,
            Metric::Auc => &self.auc,
        }
    }
}

pub fn aggregate(metrics: &[FoldMetrics]) -> Option<Aggregate> {
    let col = |m: Metric| summarize(&metrics.iter().map(|f| f.get(m)).collect::<Vec<_>>());
    Some(Aggregate {
        precision: col(Metric::Precision)?,
        recall: col(Metric::Recall)?,
        f1: col(Metric::F1)?,
        auc: col(Metric::Auc)?,
    })
}
