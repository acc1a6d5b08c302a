use serde::Serialize;

use crate::error::{Error, Result};

/// Confusion counts and derived metrics, with "prime" as the positive class.
/// Undefined ratios (zero denominators) are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub recall_prime: Option<f64>,
    pub recall_nonprime: Option<f64>,
    pub precision_prime: Option<f64>,
    pub precision_nonprime: Option<f64>,
    pub f1_prime: Option<f64>,
    pub f1_nonprime: Option<f64>,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn f1(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    }
}

impl MetricsReport {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let recall_prime = ratio(tp, tp + fn_);
        let recall_nonprime = ratio(tn, tn + fp);
        let precision_prime = ratio(tp, tp + fp);
        let precision_nonprime = ratio(tn, tn + fn_);
        MetricsReport {
            tp,
            fp,
            tn,
            fn_,
            recall_prime,
            recall_nonprime,
            precision_prime,
            precision_nonprime,
            f1_prime: f1(precision_prime, recall_prime),
            f1_nonprime: f1(precision_nonprime, recall_nonprime),
            accuracy: (tp + tn) as f64 / (tp + fp + tn + fn_).max(1) as f64,
            auc: None,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Mean of the two per-class recalls, treating an undefined recall as 0.
    pub fn mean_recall(&self) -> f64 {
        (self.recall_prime.unwrap_or(0.0) + self.recall_nonprime.unwrap_or(0.0)) / 2.0
    }

    /// `(name, value)` pairs in a fixed order; undefined values are `None`.
    pub fn entries(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("tp", Some(self.tp as f64)),
            ("fp", Some(self.fp as f64)),
            ("tn", Some(self.tn as f64)),
            ("fn", Some(self.fn_ as f64)),
            ("recall_prime", self.recall_prime),
            ("recall_nonprime", self.recall_nonprime),
            ("precision_prime", self.precision_prime),
            ("precision_nonprime", self.precision_nonprime),
            ("f1_prime", self.f1_prime),
            ("f1_nonprime", self.f1_nonprime),
            ("accuracy", Some(self.accuracy)),
            ("auc", self.auc),
        ]
    }
}

/// Confusion-derived metrics (AUC left unset).
pub fn classification_metrics(pred: &[bool], truth: &[bool]) -> Result<MetricsReport> {
    if pred.len() != truth.len() {
        return Err(Error::Argument(format!(
            "{} predictions vs {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Argument("no predictions".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, tn, fn_))
}

/// Area under the ROC curve as the Mann–Whitney statistic
/// `P(s+ > s-) + P(s+ = s-) / 2`, from midranks of the sorted scores.
///
/// `None` when either class is absent.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<Option<f64>> {
    if scores.len() != truth.len() {
        return Err(Error::Argument(format!(
            "{} scores vs {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let pos = truth.iter().filter(|&&t| t).count() as u128;
    let neg = truth.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // doubled ranks keep midranks integral
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share the midrank (i+1+j)/2
        let mid2 = (i + 1 + j) as u128;
        let tied_pos = order[i..j].iter().filter(|&&k| truth[k]).count() as u128;
        rank_sum2 += mid2 * tied_pos;
        i = j;
    }
    let u2 = rank_sum2 - pos * (pos + 1);
    Ok(Some(u2 as f64 / (2 * pos * neg) as f64))
}
