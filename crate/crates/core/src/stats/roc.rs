use super::{check_two_classes, Result, StatsError};
use serde::ser::SerializeTuple;
use serde::{Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>=` this value are called positive. The first point uses +inf.
    pub threshold: f64,
}

impl Serialize for RocPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(3)?;
        t.serialize_element(&self.fpr)?;
        t.serialize_element(&self.tpr)?;
        t.serialize_element(&self.threshold.is_finite().then_some(self.threshold))?;
        t.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(StatsError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(StatsError::InvalidArgument("NaN score".into()));
    }
    check_two_classes(labels)
}

/// Indices sorted by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    idx
}

/// ROC over every distinct score threshold (one point per tie group).
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let idx = descending(scores);
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64, threshold: s });
    }
    // same trapezoid, summed in integer counts so ties cost no rounding
    let auc = weighted_auc_sorted(&idx, scores, labels, None) / (pos as f64 * neg as f64);
    Ok(RocCurve { points, auc })
}

impl RocCurve {
    /// Trapezoidal area under `points`, summed in floating point.
    pub fn trapezoid_area(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
    }
}

/// Trapezoidal AUC computed in one sorted sweep, without materialising the curve.
///
/// Counts are accumulated in integers so the result is the exact ratio
/// `(concordant + ties / 2) / (P · N)`.
pub fn auc_trapezoid(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let idx = descending(scores);
    Ok(weighted_auc_sorted(&idx, scores, labels, None) / (pos as f64 * neg as f64))
}

/// Twice-summed trapezoid area over a descending order, with optional
/// per-index multiplicities. Returns the area in count units (P · N scale).
pub(crate) fn weighted_auc_sorted(order: &[usize], scores: &[f64], labels: &[bool], weights: Option<&[u32]>) -> f64 {
    let w = |i: usize| weights.map_or(1u64, |w| u64::from(w[i]));
    let (mut tp, mut fp) = (0u64, 0u64);
    // 2 * area in count units; stays an exact integer
    let mut twice_area = 0u64;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            let k = order[i];
            if labels[k] {
                tp += w(k);
            } else {
                fp += w(k);
            }
            i += 1;
        }
        twice_area += (fp - fp0) * (tp + tp0);
    }
    twice_area as f64 / 2.0
}

/// AUC by pair counting: (concordant + ½ tied) / (P · N).
pub fn auc_probabilistic(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut twice = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            if si > sj {
                twice += 2;
            } else if si == sj {
                twice += 1;
            }
        }
    }
    Ok(twice as f64 / 2.0 / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Scores strictly above this value are called positive.
    pub threshold: f64,
    pub fpr_target: f64,
    pub achieved_fpr: f64,
    pub achieved_tpr: f64,
}

/// Operating point with the highest TPR among thresholds whose FPR does not
/// exceed `fpr_target`. Thresholds sit midway between consecutive distinct
/// scores (one unit beyond the extremes for accept-all / reject-all).
pub fn confusion_at_fpr(scores: &[f64], labels: &[bool], fpr_target: f64) -> Result<ConfusionMatrix> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if !(0.0..=1.0).contains(&fpr_target) {
        return Err(StatsError::InvalidArgument(format!("fpr_target {fpr_target}")));
    }
    let idx = descending(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = (0usize, 0usize, scores[idx[0]] + 1.0);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if fp as f64 / neg as f64 > fpr_target {
            break;
        }
        let threshold = if i < idx.len() { (s + scores[idx[i]]) / 2.0 } else { s - 1.0 };
        best = (tp, fp, threshold);
    }
    let (tp, fp, threshold) = best;
    Ok(ConfusionMatrix {
        tp,
        fp,
        tn: neg - fp,
        fn_: pos - tp,
        threshold,
        fpr_target,
        achieved_fpr: fp as f64 / neg as f64,
        achieved_tpr: tp as f64 / pos as f64,
    })
}
