//! Iterative lesion-candidate extraction, Dice matching against ground
//! truth, and axial lesion size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::flood_component;
use crate::pipeline::PipelineConfig;
use crate::voxgrid::{Geometry, ScalarVolume};

/// One extracted detection.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLesion {
    /// 1-based extraction order.
    pub rank: usize,
    /// Peak likelihood of the region.
    pub confidence: f32,
    /// Sorted linear voxel indices.
    pub voxels: Vec<usize>,
    pub centroid_mm: [f64; 3],
}

fn centroid(g: &Geometry, voxels: &[usize]) -> [f64; 3] {
    let mut acc = [0f64; 3];
    for &i in voxels {
        let w = g.world(g.coords(i));
        for a in 0..3 {
            acc[a] += w[a];
        }
    }
    acc.map(|s| s / voxels.len() as f64)
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: &[f32]) -> Option<(usize, f32)> {
    let mut best: Option<(usize, f32)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

/// Repeatedly takes the global peak, grows the connected region of voxels at
/// or above `rel_threshold * peak` around it, records it and zeroes it, until
/// the peak drops below `peak_floor` or `max_lesions` candidates exist.
pub fn extract_candidates(likelihood: &ScalarVolume, cfg: &PipelineConfig) -> Vec<CandidateLesion> {
    let g = *likelihood.geometry();
    let mut work = likelihood.data().to_vec();
    let mut out = Vec::new();
    while out.len() < cfg.max_lesions {
        let Some((peak_at, peak)) = argmax(&work) else {
            break;
        };
        if !(peak > 0.0) || (peak as f64) < cfg.peak_floor {
            break;
        }
        let threshold = cfg.rel_threshold * peak as f64;
        let voxels = flood_component(&g, peak_at, cfg.connectivity, |i| {
            work[i] as f64 >= threshold
        });
        for &i in &voxels {
            work[i] = 0.0;
        }
        out.push(CandidateLesion {
            rank: out.len() + 1,
            confidence: peak,
            centroid_mm: centroid(&g, &voxels),
            voxels,
        });
    }
    out
}

/// Sorensen-Dice overlap of two sorted index sets.
pub fn dice(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::EmptyInput("dice of two empty sets"));
    }
    Ok(2.0 * intersection_size(a, b) as f64 / (a.len() + b.len()) as f64)
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchStatus {
    TruePositive,
    FalsePositive,
    IgnoredDuplicate,
}

/// How a candidate that only hits already-claimed lesions is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DuplicatePolicy {
    #[default]
    Ignore,
    CountFp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMatch {
    pub rank: usize,
    pub confidence: f32,
    pub status: MatchStatus,
    /// Matched (TP) or already-claimed (duplicate) lesion index.
    pub lesion: Option<usize>,
    /// Dice with `lesion`, or the best Dice over all lesions for false positives.
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Candidates in matching order: confidence descending, then rank.
    pub candidates: Vec<CandidateMatch>,
    /// For each ground-truth lesion, the rank of the candidate that claimed it.
    pub lesion_match: Vec<Option<usize>>,
}

impl MatchResult {
    pub fn count(&self, status: MatchStatus) -> usize {
        self.candidates.iter().filter(|c| c.status == status).count()
    }
}

/// Greedy matching in descending confidence. A candidate claims the unmatched
/// lesion it overlaps best if that Dice is at least `dice_min`.
pub fn match_candidates(
    cands: &[CandidateLesion],
    gt_lesions: &[Vec<usize>],
    dice_min: f64,
    policy: DuplicatePolicy,
) -> MatchResult {
    let mut order: Vec<&CandidateLesion> = cands.iter().collect();
    order.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.rank.cmp(&b.rank)));
    let mut lesion_match: Vec<Option<usize>> = vec![None; gt_lesions.len()];
    let mut out = Vec::with_capacity(order.len());
    for c in order {
        let scores: Vec<f64> = gt_lesions
            .iter()
            .map(|l| dice(&c.voxels, l).unwrap_or(0.0))
            .collect();
        let best = |claimed: bool| {
            scores
                .iter()
                .enumerate()
                .filter(|&(k, _)| lesion_match[k].is_some() == claimed)
                .fold(None, |acc: Option<(usize, f64)>, (k, &d)| match acc {
                    Some((_, bd)) if bd >= d => acc,
                    _ => Some((k, d)),
                })
        };
        let (status, lesion, d) = match (best(false), best(true)) {
            (Some((k, d)), _) if d >= dice_min => {
                lesion_match[k] = Some(c.rank);
                (MatchStatus::TruePositive, Some(k), d)
            }
            (_, Some((k, d))) if d >= dice_min => match policy {
                DuplicatePolicy::Ignore => (MatchStatus::IgnoredDuplicate, Some(k), d),
                DuplicatePolicy::CountFp => (MatchStatus::FalsePositive, Some(k), d),
            },
            _ => (
                MatchStatus::FalsePositive,
                None,
                scores.iter().copied().fold(0.0, f64::max),
            ),
        };
        out.push(CandidateMatch {
            rank: c.rank,
            confidence: c.confidence,
            status,
            lesion,
            dice: d,
        });
    }
    MatchResult {
        candidates: out,
        lesion_match,
    }
}

/// Largest in-plane diameter (mm) over axial slices, measured between voxel
/// centers; a slice never contributes less than `max(sx, sy)`.
pub fn lesion_size_axial(lesion: &[usize], geometry: &Geometry) -> Result<f64> {
    if lesion.is_empty() {
        return Err(Error::EmptyInput("lesion has no voxels"));
    }
    let [sx, sy, _] = geometry.spacing;
    let mut by_slice: std::collections::BTreeMap<usize, Vec<[i64; 2]>> = Default::default();
    for &i in lesion {
        let p = geometry.coords(i);
        by_slice.entry(p[2]).or_default().push([p[0] as i64, p[1] as i64]);
    }
    let mut best = 0f64;
    for pts in by_slice.into_values() {
        let hull = convex_hull(pts);
        for a in 0..hull.len() {
            for b in a + 1..hull.len() {
                best = best.max(in_plane_distance(hull[a], hull[b], sx, sy));
            }
        }
    }
    Ok(best.max(sx.max(sy)))
}

pub(crate) fn in_plane_distance(a: [i64; 2], b: [i64; 2], sx: f64, sy: f64) -> f64 {
    let dx = (a[0] - b[0]) as f64 * sx;
    let dy = (a[1] - b[1]) as f64 * sy;
    (dx * dx + dy * dy).sqrt()
}

/// Monotone-chain hull on integer lattice points. The farthest pair of a point
/// set (under any axis scaling) is always a pair of hull vertices.
fn convex_hull(mut pts: Vec<[i64; 2]>) -> Vec<[i64; 2]> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [i64; 2], a: [i64; 2], b: [i64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[i64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[i64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Serialized candidate: voxels as `[start, length]` runs over the linear order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateRecord {
    pub rank: usize,
    pub confidence: f32,
    pub voxel_count: usize,
    pub centroid_mm: [f64; 3],
    pub rle: Vec<[usize; 2]>,
}

pub fn run_length_encode(sorted: &[usize]) -> Vec<[usize; 2]> {
    let mut runs: Vec<[usize; 2]> = Vec::new();
    for &i in sorted {
        match runs.last_mut() {
            Some(r) if r[0] + r[1] == i => r[1] += 1,
            _ => runs.push([i, 1]),
        }
    }
    runs
}

pub fn run_length_decode(runs: &[[usize; 2]]) -> Vec<usize> {
    runs.iter().flat_map(|&[s, n]| s..s + n).collect()
}

impl From<&CandidateLesion> for CandidateRecord {
    fn from(c: &CandidateLesion) -> Self {
        CandidateRecord {
            rank: c.rank,
            confidence: c.confidence,
            voxel_count: c.voxels.len(),
            centroid_mm: c.centroid_mm,
            rle: run_length_encode(&c.voxels),
        }
    }
}

impl TryFrom<CandidateRecord> for CandidateLesion {
    type Error = Error;

    fn try_from(r: CandidateRecord) -> Result<Self> {
        let voxels = run_length_decode(&r.rle);
        if voxels.len() != r.voxel_count || voxels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "candidate {}: run-length data does not describe {} sorted voxels",
                r.rank, r.voxel_count
            )));
        }
        Ok(CandidateLesion {
            rank: r.rank,
            confidence: r.confidence,
            voxels,
            centroid_mm: r.centroid_mm,
        })
    }
}

pub fn candidates_to_json(cands: &[CandidateLesion]) -> Result<String> {
    let records: Vec<CandidateRecord> = cands.iter().map(CandidateRecord::from).collect();
    Ok(serde_json::to_string_pretty(&records)?)
}

pub fn candidates_from_json(text: &str) -> Result<Vec<CandidateLesion>> {
    let records: Vec<CandidateRecord> = serde_json::from_str(text)?;
    records.into_iter().map(CandidateLesion::try_from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::Connectivity;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn cube(n: usize) -> Geometry {
        Geometry::new([n, n, n], [1.0; 3], [0.0; 3]).unwrap()
    }

    /// Literal transcription of the extraction loop, with its own argmax and
    /// flood fill (stack-based), used as an oracle.
    fn oracle_extract(map: &ScalarVolume, rel: f64, cap: usize, floor: f64, conn: Connectivity) -> Vec<(f32, Vec<usize>)> {
        let g = *map.geometry();
        let mut pred = map.data().to_vec();
        let mut out = Vec::new();
        loop {
            if out.len() == cap {
                break;
            }
            let mut p = 0;
            for i in 0..pred.len() {
                if pred[i] > pred[p] {
                    p = i;
                }
            }
            let v = pred[p];
            if v <= 0.0 || (v as f64) < floor {
                break;
            }
            let t = rel * v as f64;
            let mut region = vec![p];
            let mut inside = vec![false; pred.len()];
            inside[p] = true;
            let mut stack = vec![p];
            while let Some(i) = stack.pop() {
                let c = g.coords(i);
                for d in conn.offsets() {
                    let q = [c[0] as i64 + d[0], c[1] as i64 + d[1], c[2] as i64 + d[2]];
                    if !g.contains(q) {
                        continue;
                    }
                    let j = g.index([q[0] as usize, q[1] as usize, q[2] as usize]);
                    if !inside[j] && pred[j] as f64 >= t {
                        inside[j] = true;
                        region.push(j);
                        stack.push(j);
                    }
                }
            }
            region.sort_unstable();
            for &i in &region {
                pred[i] = 0.0;
            }
            out.push((v, region));
        }
        out
    }

    fn blob(map: &mut ScalarVolume, center: [usize; 3], peak: f32, sigma: f64) {
        let g = *map.geometry();
        for i in 0..g.len() {
            let p = g.coords(i);
            let d2: f64 = (0..3).map(|a| (p[a] as f64 - center[a] as f64).powi(2)).sum();
            let v = peak * (-d2 / (2.0 * sigma * sigma)).exp() as f32;
            if v > map.data()[i] {
                map.data_mut()[i] = v;
            }
        }
    }

    #[test]
    fn all_zero_map_has_no_candidates() {
        let m = ScalarVolume::filled(cube(5), 0.0).unwrap();
        assert!(extract_candidates(&m, &PipelineConfig::default()).is_empty());
        let cfg = PipelineConfig { peak_floor: 0.0, ..PipelineConfig::default() };
        assert!(extract_candidates(&m, &cfg).is_empty());
    }

    #[test]
    fn two_blobs() {
        let mut m = ScalarVolume::filled(cube(16), 0.0).unwrap();
        blob(&mut m, [4, 4, 4], 0.9, 1.2);
        blob(&mut m, [11, 11, 11], 0.5, 1.2);
        let cands = extract_candidates(&m, &PipelineConfig::default());
        // blob tails give further low candidates; the first two are the blobs
        assert!(cands.len() >= 2);
        assert_eq!(cands[0].confidence, 0.9);
        assert_eq!(cands[1].confidence, 0.5);
        let g = cube(16);
        let region = |thr: f64, near: [usize; 3]| -> Vec<usize> {
            (0..g.len())
                .filter(|&i| {
                    let p = g.coords(i);
                    m.data()[i] as f64 >= thr && (0..3).all(|a| (p[a] as i64 - near[a] as i64).abs() <= 4)
                })
                .collect()
        };
        assert_eq!(cands[0].voxels, region(0.4 * 0.9f32 as f64, [4, 4, 4]));
        assert_eq!(cands[1].voxels, region(0.4 * 0.5f32 as f64, [11, 11, 11]));
        let oracle = oracle_extract(&m, 0.4, 5, 1e-3, Connectivity::TwentySix);
        let ours: Vec<(f32, Vec<usize>)> = cands.iter().map(|c| (c.confidence, c.voxels.clone())).collect();
        assert_eq!(ours, oracle);
    }

    #[test]
    fn cap_keeps_five_largest_peaks() {
        let g = cube(16);
        let mut m = ScalarVolume::filled(g, 0.0).unwrap();
        let peaks = [0.3, 0.9, 0.5, 0.7, 0.2, 0.8, 0.6];
        for (k, &v) in peaks.iter().enumerate() {
            m.set([2 * k + 1, 3, 3], v);
        }
        let cands = extract_candidates(&m, &PipelineConfig::default());
        let conf: Vec<f32> = cands.iter().map(|c| c.confidence).collect();
        assert_eq!(conf, vec![0.9, 0.8, 0.7, 0.6, 0.5]);
        assert!(cands.iter().all(|c| c.voxels.len() == 1));
        assert_eq!(cands.iter().map(|c| c.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn ties_break_on_lowest_index() {
        let g = cube(8);
        let mut m = ScalarVolume::filled(g, 0.0).unwrap();
        m.set([6, 6, 6], 0.5);
        m.set([1, 1, 1], 0.5);
        let cands = extract_candidates(&m, &PipelineConfig::default());
        assert_eq!(cands[0].voxels, vec![g.index([1, 1, 1])]);
    }

    #[test]
    fn random_maps_match_literal_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let g = cube(16);
            let data: Vec<f32> = (0..g.len())
                .map(|_| if rng.gen_bool(0.3) { rng.gen() } else { 0.0 })
                .collect();
            let m = ScalarVolume::new(g, data).unwrap();
            for conn in [Connectivity::Six, Connectivity::TwentySix] {
                let cfg = PipelineConfig { connectivity: conn, ..PipelineConfig::default() };
                let ours: Vec<(f32, Vec<usize>)> = extract_candidates(&m, &cfg)
                    .into_iter()
                    .map(|c| (c.confidence, c.voxels))
                    .collect();
                assert_eq!(ours, oracle_extract(&m, 0.4, 5, 1e-3, conn));
            }
        }
    }

    #[test]
    fn dice_cases() {
        assert_eq!(dice(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(dice(&[1, 2], &[3, 4]).unwrap(), 0.0);
        assert_eq!(dice(&[1, 2], &[2, 3]).unwrap(), 0.5);
        assert_eq!(dice(&[], &[4]).unwrap(), 0.0);
        assert!(dice(&[], &[]).is_err());
    }

    fn cand(rank: usize, confidence: f32, voxels: Vec<usize>) -> CandidateLesion {
        CandidateLesion { rank, confidence, voxels, centroid_mm: [0.0; 3] }
    }

    #[test]
    fn exact_candidate_is_true_positive() {
        let lesion = vec![3, 4, 5];
        let r = match_candidates(&[cand(1, 0.8, lesion.clone())], &[lesion], 0.1, DuplicatePolicy::Ignore);
        assert_eq!(r.candidates[0].status, MatchStatus::TruePositive);
        assert_eq!(r.candidates[0].dice, 1.0);
        assert_eq!(r.lesion_match, vec![Some(1)]);
    }

    #[test]
    fn disjoint_candidate_is_false_positive() {
        let r = match_candidates(&[cand(1, 0.8, vec![10, 11])], &[vec![3, 4]], 0.1, DuplicatePolicy::Ignore);
        assert_eq!(r.candidates[0].status, MatchStatus::FalsePositive);
        assert_eq!(r.lesion_match, vec![None]);
    }

    #[test]
    fn second_hit_on_claimed_lesion_is_duplicate() {
        // lesion of 10 voxels; a: 5 voxels inside -> 2*5/15 = 0.667 (>= 0.6 per construction)
        let lesion: Vec<usize> = (0..10).collect();
        let a = cand(1, 0.9, (0..5).collect());
        // b: 2 inside + 1 outside -> 2*2/13 = 0.31
        let b = cand(2, 0.4, vec![8, 9, 50]);
        let expect_a = 2.0 * 5.0 / 15.0;
        let expect_b = 2.0 * 2.0 / 13.0;
        assert!(expect_a >= 0.6 && (0.3..0.35).contains(&expect_b));
        for order in [vec![a.clone(), b.clone()], vec![b.clone(), a.clone()]] {
            let r = match_candidates(&order, &[lesion.clone()], 0.1, DuplicatePolicy::Ignore);
            assert_eq!(r.candidates[0].rank, 1);
            assert_eq!(r.candidates[0].status, MatchStatus::TruePositive);
            assert!((r.candidates[0].dice - expect_a).abs() < 1e-15);
            assert_eq!(r.candidates[1].status, MatchStatus::IgnoredDuplicate);
            assert!((r.candidates[1].dice - expect_b).abs() < 1e-15);
        }
        let r = match_candidates(&[a, b], &[lesion], 0.1, DuplicatePolicy::CountFp);
        assert_eq!(r.candidates[1].status, MatchStatus::FalsePositive);
    }

    #[test]
    fn candidate_prefers_best_unmatched_lesion() {
        let l0: Vec<usize> = (0..4).collect();
        let l1: Vec<usize> = (10..14).collect();
        // first candidate mostly on l1, second overlaps both but l1 is taken
        let c1 = cand(1, 0.9, (10..14).collect());
        let c2 = cand(2, 0.5, vec![0, 1, 12, 13]);
        let r = match_candidates(&[c1, c2], &[l0, l1], 0.1, DuplicatePolicy::Ignore);
        assert_eq!(r.lesion_match, vec![Some(2), Some(1)]);
        assert_eq!(r.count(MatchStatus::TruePositive), 2);
    }

    #[test]
    fn size_345_triangle() {
        let g = Geometry::new([6, 6, 2], [1.0, 1.0, 3.0], [0.0; 3]).unwrap();
        let s = lesion_size_axial(&[g.index([0, 0, 1]), g.index([3, 4, 1])], &g).unwrap();
        assert_eq!(s, 5.0);
    }

    #[test]
    fn size_single_voxel_uses_spacing() {
        let g = Geometry::new([3, 3, 3], [0.8, 0.8, 3.0], [0.0; 3]).unwrap();
        assert_eq!(lesion_size_axial(&[g.index([1, 1, 1])], &g).unwrap(), 0.8);
        assert!(lesion_size_axial(&[], &g).is_err());
    }

    fn pairwise_size(lesion: &[usize], g: &Geometry) -> f64 {
        let mut best = 0f64;
        for &a in lesion {
            for &b in lesion {
                let (pa, pb) = (g.coords(a), g.coords(b));
                if pa[2] == pb[2] {
                    let d = in_plane_distance(
                        [pa[0] as i64, pa[1] as i64],
                        [pb[0] as i64, pb[1] as i64],
                        g.spacing[0],
                        g.spacing[1],
                    );
                    best = best.max(d);
                }
            }
        }
        best.max(g.spacing[0].max(g.spacing[1]))
    }

    #[test]
    fn size_matches_pairwise_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let g = Geometry::new([20, 20, 6], [rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5), 2.0], [0.0; 3]).unwrap();
            let mut set = std::collections::BTreeSet::new();
            let mut p = [10i64, 10, 3];
            while set.len() < 200 {
                set.insert(g.index([p[0] as usize, p[1] as usize, p[2] as usize]));
                let a = rng.gen_range(0..3);
                p[a] = (p[a] + if rng.gen_bool(0.5) { 1 } else { -1 }).clamp(0, g.dims[a] as i64 - 1);
            }
            let lesion: Vec<usize> = set.into_iter().collect();
            assert_eq!(lesion_size_axial(&lesion, &g).unwrap(), pairwise_size(&lesion, &g));
        }
    }

    #[test]
    fn rle_json_round_trip() {
        let g = cube(6);
        let mut m = ScalarVolume::filled(g, 0.0).unwrap();
        blob(&mut m, [2, 2, 2], 0.8, 1.0);
        let cands = extract_candidates(&m, &PipelineConfig::default());
        let json = candidates_to_json(&cands).unwrap();
        assert_eq!(candidates_from_json(&json).unwrap(), cands);
        assert_eq!(run_length_encode(&[1, 2, 3, 7, 9, 10]), vec![[1, 3], [7, 1], [9, 2]]);
        let bad = r#"[{"rank":1,"confidence":0.5,"voxel_count":3,"centroid_mm":[0,0,0],"rle":[[0,2]]}]"#;
        assert!(candidates_from_json(bad).is_err());
    }

    fn arb_map() -> impl Strategy<Value = ScalarVolume> {
        (any::<u64>(), 0.05f64..0.6).prop_map(|(seed, density)| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Geometry::new([8, 7, 6], [1.0, 1.0, 2.0], [0.0; 3]).unwrap();
            let data = (0..g.len())
                .map(|_| if rng.gen_bool(density) { rng.gen::<f32>() } else { 0.0 })
                .collect();
            ScalarVolume::new(g, data).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn candidate_invariants(m in arb_map()) {
            let cfg = PipelineConfig::default();
            let cands = extract_candidates(&m, &cfg);
            let mut seen = std::collections::HashSet::new();
            for (k, c) in cands.iter().enumerate() {
                prop_assert_eq!(c.rank, k + 1);
                prop_assert!(c.confidence > 0.0 && c.confidence <= 1.0);
                if k > 0 {
                    prop_assert!(c.confidence <= cands[k - 1].confidence);
                }
                for &i in &c.voxels {
                    prop_assert!(m.data()[i] as f64 >= cfg.rel_threshold * c.confidence as f64);
                    prop_assert!(seen.insert(i), "regions overlap");
                }
                // connected: flood from the first voxel within the region reaches all of it
                let region: std::collections::HashSet<usize> = c.voxels.iter().copied().collect();
                let reach = flood_component(m.geometry(), c.voxels[0], cfg.connectivity, |i| region.contains(&i));
                prop_assert_eq!(reach.len(), c.voxels.len());
            }
        }

        #[test]
        fn residual_prefix_property(m in arb_map(), k in 1usize..5) {
            let cfg = PipelineConfig::default();
            let all = extract_candidates(&m, &cfg);
            prop_assume!(all.len() > k);
            let mut residual = m.clone();
            for c in &all[..k] {
                for &i in &c.voxels {
                    residual.data_mut()[i] = 0.0;
                }
            }
            let tail_cfg = PipelineConfig { max_lesions: cfg.max_lesions - k, ..cfg };
            let tail = extract_candidates(&residual, &tail_cfg);
            prop_assert_eq!(tail.len(), all.len() - k);
            for (a, b) in tail.iter().zip(&all[k..]) {
                prop_assert_eq!(a.confidence, b.confidence);
                prop_assert_eq!(&a.voxels, &b.voxels);
            }
        }

        #[test]
        fn power_of_two_scaling_keeps_regions(m in arb_map(), e in 1i32..4) {
            // powers of two scale f32 values exactly, so threshold comparisons are preserved
            let c = 0.5f32.powi(e);
            let cfg = PipelineConfig { peak_floor: 0.0, ..PipelineConfig::default() };
            let scaled = m.map(|v| v * c);
            let a = extract_candidates(&m, &cfg);
            let b = extract_candidates(&scaled, &cfg);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(&x.voxels, &y.voxels);
                prop_assert_eq!(x.confidence * c, y.confidence);
            }
        }

        #[test]
        fn dice_symmetry(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a: std::collections::BTreeSet<usize> = (0..rng.gen_range(1..30)).map(|_| rng.gen_range(0..50)).collect();
            let b: std::collections::BTreeSet<usize> = (0..rng.gen_range(1..30)).map(|_| rng.gen_range(0..50)).collect();
            let (a, b): (Vec<usize>, Vec<usize>) = (a.into_iter().collect(), b.into_iter().collect());
            prop_assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
            prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
            let d = dice(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn matching_is_order_invariant(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let lesions: Vec<Vec<usize>> = (0..rng.gen_range(1..4)).map(|k| (k * 20..k * 20 + rng.gen_range(2..10)).collect()).collect();
            let mut cands: Vec<CandidateLesion> = (0..rng.gen_range(1..6)).map(|r| {
                let start = rng.gen_range(0..60);
                cand(r + 1, rng.gen_range(1..5) as f32 / 5.0, (start..start + rng.gen_range(1..8)).collect())
            }).collect();
            let a = match_candidates(&cands, &lesions, 0.1, DuplicatePolicy::Ignore);
            cands.reverse();
            let b = match_candidates(&cands, &lesions, 0.1, DuplicatePolicy::Ignore);
            prop_assert_eq!(a.clone(), b);
            for c in &a.candidates {
                if c.status == MatchStatus::TruePositive {
                    prop_assert!(c.dice >= 0.1);
                }
            }
            let claimed: Vec<usize> = a.lesion_match.iter().flatten().copied().collect();
            let unique: std::collections::HashSet<usize> = claimed.iter().copied().collect();
            prop_assert_eq!(claimed.len(), unique.len());
        }
    }
}
