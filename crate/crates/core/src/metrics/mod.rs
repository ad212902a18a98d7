//! Patient- and lesion-level evaluation: ROC/AUC, FROC/pAUC, vertically
//! averaged curves with confidence bands, and permutation testing.

mod curves;
mod froc;
mod permutation;
mod roc;

pub use curves::{mean_curve_ci, step_value, MeanCurve};
pub use froc::{froc, froc_csv, pauc_froc, FrocCurve, FrocPoint};
pub use permutation::{bonferroni, compare, permutation_test, ComparisonReport, PermutationResult};
pub use roc::{auc_rank_statistic, roc, roc_csv, RocCurve, RocPoint};

use serde::{Deserialize, Serialize};

use crate::candidates::MatchResult;

/// Interval of false positives per case over which the FROC area is taken.
pub const FROC_INTERVAL: (f64, f64) = (0.001, 5.0);
/// Minimum Dice for a candidate to count as a hit.
pub const DICE_MIN: f64 = 0.1;
pub const PERMUTATION_ITERATIONS: usize = 100_000;
/// Significance level (97.5% confidence).
pub const ALPHA: f64 = 0.025;
/// Pairwise comparisons among three configurations.
pub const DEFAULT_COMPARISONS: usize = 3;
/// Size cutoff of the small-tumor subgroup.
pub const SUBGROUP_MAX_MM: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Pdac,
    Normal,
}

/// Evaluation record of one case under one model (or the ensemble).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub cohort: Cohort,
    pub model_id: String,
    pub patient_score: f64,
    pub matches: MatchResult,
    pub gt_lesion_sizes_mm: Vec<f64>,
}

impl CaseResult {
    pub fn lesion_count(&self) -> usize {
        self.matches.lesion_match.len()
    }

    pub fn largest_lesion_mm(&self) -> Option<f64> {
        self.gt_lesion_sizes_mm.iter().copied().reduce(f64::max)
    }
}

/// Patient-level scores split by cohort: `(pdac, normal)`.
pub fn split_scores(cases: &[CaseResult]) -> (Vec<f64>, Vec<f64>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for c in cases {
        match c.cohort {
            Cohort::Pdac => pos.push(c.patient_score),
            Cohort::Normal => neg.push(c.patient_score),
        }
    }
    (pos, neg)
}

/// Keeps normal cases and pdac cases whose largest lesion is strictly below `max_size_mm`.
pub fn subgroup_filter(cases: &[CaseResult], max_size_mm: f64) -> Vec<CaseResult> {
    cases
        .iter()
        .filter(|c| match c.cohort {
            Cohort::Normal => true,
            Cohort::Pdac => c.largest_lesion_mm().is_some_and(|s| s < max_size_mm),
        })
        .cloned()
        .collect()
}


#[cfg(test)]
mod tests {
    use super::test_support::case;
    use super::*;

    #[test]
    fn subgroup_uses_strict_inequality() {
        let mut small = case("a", Cohort::Pdac, 0.9, 1, &[]);
        small.gt_lesion_sizes_mm = vec![19.9];
        let mut edge = case("b", Cohort::Pdac, 0.9, 1, &[]);
        edge.gt_lesion_sizes_mm = vec![20.0];
        let normal = case("c", Cohort::Normal, 0.1, 0, &[]);
        let kept = subgroup_filter(&[small, edge, normal], 20.0);
        let ids: Vec<&str> = kept.iter().map(|c| c.case_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c"]);
    }

    #[test]
    fn subgroup_matches_direct_comparison() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let cases: Vec<CaseResult> = (0..60)
            .map(|k| {
                let pdac = rng.gen_bool(0.6);
                let mut c = case(&k.to_string(), if pdac { Cohort::Pdac } else { Cohort::Normal }, 0.5, pdac as usize, &[]);
                c.gt_lesion_sizes_mm = if pdac { vec![rng.gen_range(4.0..30.0)] } else { vec![] };
                c
            })
            .collect();
        let kept = subgroup_filter(&cases, 20.0);
        let expected: Vec<&CaseResult> = cases
            .iter()
            .filter(|c| c.cohort == Cohort::Normal || c.gt_lesion_sizes_mm[0] < 20.0)
            .collect();
        assert_eq!(kept.len(), expected.len());
        for (a, b) in kept.iter().zip(expected) {
            assert_eq!(a, b);
        }
    }
}
