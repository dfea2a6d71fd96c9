use crate::error::{Error, Result};
use crate::text::Label;

/// Threshold metrics, the rank-based AUC and the confusion counts they came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when only threshold metrics were requested.
    pub roc_auc: Option<f64>,
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    /// Builds the ratios from confusion counts. Zero denominators give 0.
    pub fn from_counts(true_pos: usize, false_pos: usize, true_neg: usize, false_neg: usize) -> Self {
        let n = true_pos + false_pos + true_neg + false_neg;
        let precision = ratio(true_pos, true_pos + false_pos);
        let recall = ratio(true_pos, true_pos + false_neg);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            accuracy: ratio(true_pos + true_neg, n),
            precision,
            recall,
            f1,
            roc_auc: None,
            true_pos,
            false_pos,
            true_neg,
            false_neg,
        }
    }

    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    /// `[accuracy, precision, recall, f1, roc_auc]`, AUC as NaN when absent.
    pub fn values(&self) -> [f64; 5] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.roc_auc.unwrap_or(f64::NAN),
        ]
    }
}

fn check_inputs(op: &'static str, probs: &[f64], labels: &[Label]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::shape(op, &[probs.len()], &[labels.len()]));
    }
    if probs.is_empty() {
        return Err(Error::invalid(op, "no predictions"));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite()) {
        return Err(Error::Numeric(format!("{op}: non-finite score {p}")));
    }
    Ok(())
}

/// Accuracy, precision, recall and F1 with `prob >= threshold` as positive.
pub fn confusion_metrics(probs: &[f64], labels: &[Label], threshold: f64) -> Result<MetricsReport> {
    check_inputs("confusion_metrics", probs, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y.is_positive()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, tn, fn_))
}

/// Mann-Whitney AUC: the share of (positive, negative) pairs ranked correctly,
/// ties counting one half.
///
/// Counts are kept as integers and divided once, so the result is exactly the
/// value exhaustive pair counting produces.
pub fn roc_auc(probs: &[f64], labels: &[Label]) -> Result<f64> {
    check_inputs("roc_auc", probs, labels)?;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));

    // Walk tie groups in ascending score order.
    let (mut negs_below, mut wins, mut ties) = (0u128, 0u128, 0u128);
    let (mut pos_total, mut neg_total) = (0u128, 0u128);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        // -0.0 and 0.0 compare equal, so group on ==.
        while j < order.len() && probs[order[j]] == probs[order[i]] {
            if labels[order[j]].is_positive() {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        wins += pos * negs_below;
        ties += pos * neg;
        negs_below += neg;
        pos_total += pos;
        neg_total += neg;
        i = j;
    }
    if pos_total == 0 || neg_total == 0 {
        return Err(Error::Data(format!(
            "ROC-AUC is undefined with {pos_total} positive and {neg_total} negative labels"
        )));
    }
    Ok((2 * wins + ties) as f64 / (2 * pos_total * neg_total) as f64)
}

/// Threshold metrics plus AUC.
pub fn evaluate(probs: &[f64], labels: &[Label], threshold: f64) -> Result<MetricsReport> {
    let mut report = confusion_metrics(probs, labels, threshold)?;
    report.roc_auc = Some(roc_auc(probs, labels)?);
    Ok(report)
}
