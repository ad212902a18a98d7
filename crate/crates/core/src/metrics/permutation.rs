use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ALPHA;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub mean_a: f64,
    pub mean_b: f64,
    /// `mean(a) - mean(b)`.
    pub observed: f64,
    pub p_value: f64,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub observed_difference: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub comparisons: usize,
    pub iterations: usize,
    pub seed: u64,
    pub alpha: f64,
    pub significant: bool,
}

const BLOCK: usize = 4096;
/// Slack, relative to the largest absolute value, when comparing permuted
/// statistics with the observed one, so that partitions equal to the observed
/// one are not lost to rounding.
const TIE_SLACK: f64 = 1e-12;

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Two-sided permutation test on the difference of means.
///
/// Iteration `i` draws its relabeling from stream `i` of a ChaCha generator
/// seeded with `seed`, so results do not depend on thread count. The two
/// groups are put in a canonical order before pooling, which makes the
/// p-value identical when `a` and `b` are exchanged.
pub fn permutation_test(a: &[f64], b: &[f64], iterations: usize, seed: u64) -> Result<PermutationResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "each group needs at least 2 values, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite value in permutation groups".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be >= 1".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mean_a, mean_b) = (mean(a), mean(b));
    let observed = mean_a - mean_b;
    let result = |p_value| PermutationResult {
        mean_a,
        mean_b,
        observed,
        p_value,
        iterations,
        seed,
    };

    let (sa, sb) = (sorted(a), sorted(b));
    let first_is_a = (sa.len(), &sa)
        .partial_cmp(&(sb.len(), &sb))
        .map_or(true, |o| o.is_le());
    let (g1, g2) = if first_is_a { (sa, sb) } else { (sb, sa) };
    let pool: Vec<f64> = g1.iter().chain(&g2).copied().collect();
    if pool.iter().all(|&v| v == pool[0]) {
        return Ok(result(1.0));
    }
    let (n1, n2) = (g1.len(), g2.len());
    let total: f64 = pool.iter().sum();
    let stat = |s1: f64| s1 / n1 as f64 - (total - s1) / n2 as f64;
    let obs = stat(g1.iter().sum()).abs();
    let scale = pool.iter().fold(0f64, |m, v| m.max(v.abs()));
    let cutoff = obs - TIE_SLACK * scale;

    let blocks = iterations.div_ceil(BLOCK);
    let extreme: usize = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut buf = pool.clone();
            let mut count = 0;
            for i in blk * BLOCK..((blk + 1) * BLOCK).min(iterations) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                buf.copy_from_slice(&pool);
                // partial Fisher-Yates: the first n1 slots form the relabeled group
                for k in 0..n1 {
                    let j = rng.gen_range(k..buf.len());
                    buf.swap(k, j);
                }
                if stat(buf[..n1].iter().sum()).abs() >= cutoff {
                    count += 1;
                }
            }
            count
        })
        .sum();
    Ok(result((1 + extreme) as f64 / (iterations + 1) as f64))
}

/// Bonferroni adjustment for `m` comparisons.
pub fn bonferroni(p_raw: f64, m: usize) -> f64 {
    (p_raw * m.max(1) as f64).min(1.0)
}

/// Permutation test plus multiple-comparison adjustment and decision at `ALPHA`.
pub fn compare(
    metric: &str,
    a: &[f64],
    b: &[f64],
    iterations: usize,
    seed: u64,
    comparisons: usize,
) -> Result<ComparisonReport> {
    let r = permutation_test(a, b, iterations, seed)?;
    let p_adjusted = bonferroni(r.p_value, comparisons);
    Ok(ComparisonReport {
        metric: metric.to_string(),
        mean_a: r.mean_a,
        mean_b: r.mean_b,
        observed_difference: r.observed,
        p_raw: r.p_value,
        p_adjusted,
        comparisons,
        iterations,
        seed,
        alpha: ALPHA,
        significant: p_adjusted < ALPHA,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn identical_groups_give_p_one() {
        let a = [0.91, 0.88, 0.93, 0.90, 0.87, 0.92, 0.89, 0.94, 0.90, 0.91];
        let r = permutation_test(&a, &a, 20_000, 1).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.observed, 0.0);
    }

    #[test]
    fn constant_pool_gives_p_one() {
        let r = permutation_test(&[0.5; 3], &[0.5; 4], 100, 1).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn separated_groups_reach_minimum_p() {
        let a = [1.0; 10];
        let b = [0.0; 10];
        let r = permutation_test(&a, &b, 100_000, 7).unwrap();
        assert_eq!(r.observed, 1.0);
        // only the two perfect splits out of C(20, 10) = 184756 reach |T| = 1
        assert!(r.p_value <= 1.2e-4, "p = {}", r.p_value);
        assert!(r.p_value >= 1.0 / 100_001.0);
    }

    #[test]
    fn deterministic_and_symmetric() {
        let a = [0.81, 0.86, 0.79, 0.90, 0.84];
        let b = [0.78, 0.80, 0.77, 0.83, 0.82, 0.75];
        let r1 = permutation_test(&a, &b, 20_000, 3).unwrap();
        let r2 = permutation_test(&a, &b, 20_000, 3).unwrap();
        assert_eq!(r1, r2);
        let swapped = permutation_test(&b, &a, 20_000, 3).unwrap();
        assert_eq!(swapped.observed, -r1.observed);
        assert_eq!(swapped.p_value, r1.p_value);
        let other_seed = permutation_test(&a, &b, 20_000, 4).unwrap();
        assert!((other_seed.p_value - r1.p_value).abs() < 0.02);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let a = [0.3, 0.5, 0.4, 0.6];
        let b = [0.2, 0.35, 0.1, 0.4];
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| permutation_test(&a, &b, 30_000, 9).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn validation() {
        assert!(permutation_test(&[1.0], &[1.0, 2.0], 10, 0).is_err());
        assert!(permutation_test(&[1.0, f64::NAN], &[1.0, 2.0], 10, 0).is_err());
        assert!(permutation_test(&[1.0, 2.0], &[1.0, 2.0], 0, 0).is_err());
    }

    #[test]
    fn bonferroni_caps_at_one() {
        assert_eq!(bonferroni(0.01, 3), 0.03);
        assert_eq!(bonferroni(0.5, 3), 1.0);
        let r = compare("auc", &[1.0; 10], &[0.0; 10], 100_000, 1, 3).unwrap();
        assert!(r.p_adjusted >= r.p_raw && r.significant);
    }

    #[test]
    fn null_calibration() {
        let normal = Normal::new(0.8, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let trials = 200;
        let mut rejections = 0;
        for t in 0..trials {
            let a: Vec<f64> = (0..10).map(|_| normal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..10).map(|_| normal.sample(&mut rng)).collect();
            if permutation_test(&a, &b, 5_000, t).unwrap().p_value < ALPHA {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / trials as f64;
        assert!((0.005..=0.055).contains(&rate), "rejection rate {rate}");
    }
}
