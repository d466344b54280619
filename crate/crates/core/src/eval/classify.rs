use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts of a thresholded binary classifier, `ŷ = 1[score > threshold]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub threshold: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl ConfusionMatrix {
    pub fn from_counts(tp: usize, tn: usize, fp: usize, fn_: usize) -> Self {
        Self { threshold: f64::NAN, tp, tn, fp, fn_ }
    }

    pub fn n(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// True-positive rate; 0 when there are no positives.
    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// True-negative rate; 0 when there are no negatives.
    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.n())
    }

    /// Agreement expected from a classifier independent of the labels with
    /// the same margins.
    pub fn random_accuracy(&self) -> f64 {
        let n = self.n() as f64;
        let pred_pos = (self.tp + self.fp) as f64;
        let pred_neg = (self.tn + self.fn_) as f64;
        let pos = (self.tp + self.fn_) as f64;
        let neg = (self.tn + self.fp) as f64;
        (pred_pos * pos + pred_neg * neg) / (n * n)
    }

    pub fn kappa(&self) -> Result<f64> {
        kappa(self)
    }
}

/// Classifies `score > threshold` as positive and tabulates against 0/1 labels.
pub fn confusion_at(scores: &[f64], labels: &[f64], threshold: f64) -> ConfusionMatrix {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let mut cm = ConfusionMatrix { threshold, tp: 0, tn: 0, fp: 0, fn_: 0 };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s > threshold, y > 0.5) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    cm
}

/// Cohen's kappa: (accuracy − random accuracy) / (1 − random accuracy).
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let random = cm.random_accuracy();
    if (1.0 - random).abs() < 1e-15 {
        return Err(Error::InvalidArgument(
            "kappa undefined: random accuracy is 1 (single-cell table)".into(),
        ));
    }
    Ok((cm.accuracy() - random) / (1.0 - random))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores strictly above the threshold are predicted positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub tp: usize,
    pub fp: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From (0,0) at the largest threshold to (1,1) at `-inf`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Empirical ROC curve over every distinct score, with trapezoidal AUC.
pub fn roc(scores: &[f64], labels: &[f64]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&y| y > 0.5).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        // threshold s excludes every score equal to s
        points.push(point(s, tp, fp, positives, negatives));
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] > 0.5 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
    }
    points.push(point(f64::NEG_INFINITY, tp, fp, positives, negatives));

    // twice the area in units of (1/negatives) x (1/positives), kept integral
    let twice: u128 = points
        .windows(2)
        .map(|w| (w[1].fp - w[0].fp) as u128 * (w[0].tp + w[1].tp) as u128)
        .sum();
    let auc = twice as f64 / (2.0 * positives as f64 * negatives as f64);
    Ok(RocCurve { points, auc, positives, negatives })
}

fn point(threshold: f64, tp: usize, fp: usize, pos: usize, neg: usize) -> RocPoint {
    RocPoint { threshold, fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64, tp, fp }
}

impl RocCurve {
    /// Writes `threshold,fpr,tpr` rows, endpoints included.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "threshold,fpr,tpr")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", fmt_threshold(p.threshold), p.fpr, p.tpr)?;
        }
        Ok(())
    }
}

fn fmt_threshold(t: f64) -> String {
    if t == f64::NEG_INFINITY {
        "-Inf".into()
    } else {
        t.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Threshold whose ROC point is closest to the perfect corner
/// (specificity, sensitivity) = (1, 1); ties go to the smaller threshold.
pub fn optimal_cutoff(rc: &RocCurve) -> Cutoff {
    let mut best: Option<(f64, &RocPoint)> = None;
    for p in &rc.points {
        let d = p.fpr.powi(2) + (1.0 - p.tpr).powi(2);
        match best {
            Some((bd, bp)) if d > bd || (d == bd && p.threshold >= bp.threshold) => {}
            _ => best = Some((d, p)),
        }
    }
    let (_, p) = best.expect("ROC curve has at least two points");
    Cutoff { threshold: p.threshold, sensitivity: p.tpr, specificity: 1.0 - p.fpr }
}
