//! Detection metrics. Anomalies (label −1) are the positive class and a
//! window is flagged when its score exceeds the threshold.
//!
//! Undefined ratios (0/0) are reported as 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

fn check_labels(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidArgument("labels must be +1 or -1".into()));
    }
    Ok(())
}

pub fn confusion(scores: &[f64], labels: &[f64], threshold: f64) -> Result<ConfusionMatrix> {
    check_labels(scores, labels)?;
    let mut cm = ConfusionMatrix::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s > threshold, y < 0.0) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Field-wise sum.
pub fn aggregate(confusions: &[ConfusionMatrix]) -> Result<ConfusionMatrix> {
    if confusions.is_empty() {
        return Err(Error::InsufficientData("nothing to aggregate".into()));
    }
    Ok(confusions
        .iter()
        .fold(ConfusionMatrix::default(), |a, &b| a + b))
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn precision_recall_f1(cm: &ConfusionMatrix) -> (f64, f64, f64) {
    let p = ratio(cm.tp, cm.tp + cm.fp);
    let r = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f1)
}

/// `sqrt(sensitivity · specificity)`.
pub fn g_mean(cm: &ConfusionMatrix) -> f64 {
    let sensitivity = ratio(cm.tp, cm.tp + cm.fn_);
    let specificity = ratio(cm.tn, cm.tn + cm.fp);
    (sensitivity * specificity).sqrt()
}

/// Average precision `Σ_k P_k (R_k − R_{k−1})` over descending distinct
/// score thresholds; tied scores enter as a single threshold.
pub fn au_pr(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_labels(scores, labels)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite);
    }
    let positives = labels.iter().filter(|&&y| y < 0.0).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::InvalidArgument("AU-PR needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut last_tp = 0usize;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] < 0.0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // precision weighted by the recall gained, scaled by 1/P at the end
        ap += (tp - last_tp) as f64 * tp as f64 / (tp + fp) as f64;
        last_tp = tp;
    }
    Ok(ap / positives as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub au_pr: f64,
    pub g_mean: f64,
}

/// Metrics over one or more scored subsets. Threshold metrics come from the
/// summed confusion matrix; AU-PR is computed on the pooled scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    pub subset_confusions: Vec<ConfusionMatrix>,
}

pub fn metrics_report(subsets: &[(&[f64], &[f64])], threshold: f64) -> Result<MetricsReport> {
    let subset_confusions = subsets
        .iter()
        .map(|(s, y)| confusion(s, y, threshold))
        .collect::<Result<Vec<_>>>()?;
    let cm = aggregate(&subset_confusions)?;
    let scores: Vec<f64> = subsets
        .iter()
        .flat_map(|(s, _)| s.iter().copied())
        .collect();
    let labels: Vec<f64> = subsets
        .iter()
        .flat_map(|(_, y)| y.iter().copied())
        .collect();
    let (precision, recall, f1) = precision_recall_f1(&cm);
    Ok(MetricsReport {
        metrics: Metrics {
            precision,
            recall,
            f1,
            au_pr: au_pr(&scores, &labels)?,
            g_mean: g_mean(&cm),
        },
        confusion: cm,
        subset_confusions,
    })
}
