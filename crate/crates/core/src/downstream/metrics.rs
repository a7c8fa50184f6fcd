use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Area under the ROC curve from the rank-sum statistic, with midranks for ties.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            format!("{} labels", scores.len()),
            format!("{}", labels.len()),
        ));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Degenerate("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], labels: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &l) in predicted.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    fn ratio(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn sensitivity(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> f64 {
        Self::ratio(self.tn, self.tn + self.fp)
    }

    pub fn balanced_accuracy(&self) -> f64 {
        (self.sensitivity() + self.specificity()) / 2.0
    }

    /// Zero when there are no positive predictions and no positive labels.
    pub fn f1(&self) -> f64 {
        Self::ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    /// Zero when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, fp, tn, fn_) = (self.tp as f64, self.fp as f64, self.tn as f64, self.fn_ as f64);
        let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        if den == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fn_) / den
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auroc: f64,
    pub balanced_accuracy: f64,
    pub f1: f64,
    pub mcc: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 4] = ["AUROC", "Balanced Accuracy", "F1-Score", "MCC"];

    pub fn values(&self) -> [f64; 4] {
        [self.auroc, self.balanced_accuracy, self.f1, self.mcc]
    }

    pub fn from_values(v: [f64; 4]) -> Self {
        Metrics {
            auroc: v[0],
            balanced_accuracy: v[1],
            f1: v[2],
            mcc: v[3],
        }
    }
}

/// AUROC on `scores`; thresholded metrics on `probabilities > threshold`.
pub fn metrics(scores: &[f64], probabilities: &[f64], labels: &[bool], threshold: f64) -> Result<Metrics> {
    if probabilities.len() != labels.len() {
        return Err(Error::shape(
            format!("{} probabilities", labels.len()),
            format!("{}", probabilities.len()),
        ));
    }
    let auroc = auroc(scores, labels)?;
    let predicted: Vec<bool> = probabilities.iter().map(|&p| p > threshold).collect();
    let c = Confusion::from_predictions(&predicted, labels);
    Ok(Metrics {
        auroc,
        balanced_accuracy: c.balanced_accuracy(),
        f1: c.f1(),
        mcc: c.mcc(),
    })
}
