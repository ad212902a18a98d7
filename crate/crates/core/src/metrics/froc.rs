use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CaseResult, FROC_INTERVAL};
use crate::candidates::MatchStatus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocPoint {
    pub threshold: f64,
    pub fp_per_case: f64,
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocCurve {
    pub points: Vec<FrocPoint>,
    /// Area over the default false-positive interval.
    pub pauc: f64,
}

impl FrocCurve {
    pub fn xy(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|p| [p.fp_per_case, p.sensitivity]).collect()
    }
}

/// Lesion-level curve over all candidate confidences. Sensitivity counts
/// true-positive candidates per ground-truth lesion; false positives are
/// averaged over every case, normals included. Ignored duplicates count
/// toward neither.
pub fn froc(cases: &[CaseResult]) -> Result<FrocCurve> {
    if cases.is_empty() {
        return Err(Error::EmptyInput("FROC needs at least one case"));
    }
    let lesions: usize = cases.iter().map(CaseResult::lesion_count).sum();
    if lesions == 0 {
        return Err(Error::NoLesions);
    }
    let mut marks: Vec<(f64, bool)> = cases
        .iter()
        .flat_map(|c| c.matches.candidates.iter())
        .filter_map(|m| match m.status {
            MatchStatus::TruePositive => Some((m.confidence as f64, true)),
            MatchStatus::FalsePositive => Some((m.confidence as f64, false)),
            MatchStatus::IgnoredDuplicate => None,
        })
        .collect();
    marks.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n_cases = cases.len() as f64;
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < marks.len() {
        let t = marks[i].0;
        while i < marks.len() && marks[i].0 == t {
            if marks[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(FrocPoint {
            threshold: t,
            fp_per_case: fp as f64 / n_cases,
            sensitivity: tp as f64 / lesions as f64,
        });
    }
    let mut curve = FrocCurve { points, pauc: 0.0 };
    curve.pauc = pauc_froc(&curve, FROC_INTERVAL.0, FROC_INTERVAL.1)?;
    Ok(curve)
}

/// Area under the step-interpolated curve on `[fp_lo, fp_hi]`. Each point's
/// sensitivity holds until the next point; it is 0 before the first point
/// and the last value extends to `fp_hi`.
pub fn pauc_froc(curve: &FrocCurve, fp_lo: f64, fp_hi: f64) -> Result<f64> {
    if !(fp_lo < fp_hi) {
        return Err(Error::InvalidParameter(format!(
            "FROC interval [{fp_lo}, {fp_hi}] is empty"
        )));
    }
    let pts = &curve.points;
    let mut area = 0.0;
    for (k, p) in pts.iter().enumerate() {
        let start = p.fp_per_case.clamp(fp_lo, fp_hi);
        let end = pts
            .get(k + 1)
            .map_or(fp_hi, |q| q.fp_per_case)
            .clamp(fp_lo, fp_hi);
        if end > start {
            area += p.sensitivity * (end - start);
        }
    }
    Ok(area)
}

/// CSV with header `threshold,x,y` (x = FP per case, y = sensitivity).
pub fn froc_csv(curve: &FrocCurve) -> String {
    let mut out = String::from("threshold,x,y\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.fp_per_case, p.sensitivity);
    }
    out
}
