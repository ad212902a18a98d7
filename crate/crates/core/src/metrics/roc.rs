use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores at or above this value are called positive; `None` for the origin.
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn xy(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|p| [p.fpr, p.tpr]).collect()
    }
}

fn check_scores(scores: &[f64], what: &'static str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter(format!("{what}: NaN score")));
    }
    Ok(())
}

/// Threshold sweep over the distinct scores, highest first; AUC is the
/// trapezoidal area under the swept points.
pub fn roc(scores_pos: &[f64], scores_neg: &[f64]) -> Result<RocCurve> {
    check_scores(scores_pos, "positive scores")?;
    check_scores(scores_neg, "negative scores")?;
    let p = scores_pos.len() as u64;
    let n = scores_neg.len() as u64;
    let mut all: Vec<(f64, bool)> = scores_pos
        .iter()
        .map(|&s| (s, true))
        .chain(scores_neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![RocPoint {
        threshold: None,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area in units of one (1/P x 1/N) cell
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        let (tp0, fp0) = (tp, fp);
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += u128::from(fp - fp0) * u128::from(tp + tp0);
        points.push(RocPoint {
            threshold: Some(t),
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
        });
    }
    let auc = area2 as f64 / (2.0 * p as f64 * n as f64);
    debug_assert!((auc - auc_rank_statistic(scores_pos, scores_neg)?).abs() <= 1e-12);
    Ok(RocCurve { points, auc })
}

/// Mann-Whitney form of the AUC: `(#{pos > neg} + 0.5 #{pos = neg}) / (P N)`,
/// computed from a single ascending sort.
pub fn auc_rank_statistic(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    check_scores(scores_pos, "positive scores")?;
    check_scores(scores_neg, "negative scores")?;
    let mut all: Vec<(f64, bool)> = scores_pos
        .iter()
        .map(|&s| (s, true))
        .chain(scores_neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut neg_below = 0u128;
    let mut twice_u = 0u128;
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        let (mut pos_here, mut neg_here) = (0u128, 0u128);
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                pos_here += 1;
            } else {
                neg_here += 1;
            }
            i += 1;
        }
        twice_u += 2 * pos_here * neg_below + pos_here * neg_here;
        neg_below += neg_here;
    }
    Ok(twice_u as f64 / (2.0 * scores_pos.len() as f64 * scores_neg.len() as f64))
}

fn fmt_threshold(t: Option<f64>) -> String {
    t.map_or_else(|| "inf".to_string(), |v| v.to_string())
}

/// CSV with header `threshold,x,y` (x = FPR, y = TPR).
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("threshold,x,y\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{}", fmt_threshold(p.threshold), p.fpr, p.tpr);
    }
    out
}
