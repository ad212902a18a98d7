//! Binary 3D morphology and connected components on voxel grids.
//!
//! Distances are physical (mm): the spherical structuring element is the set
//! of lattice offsets whose voxel-center distance is within the radius.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxgrid::{BinaryMask, Geometry, Volume, VoxelBox};

/// Voxel adjacency: faces only (6) or faces, edges and corners (26).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    #[default]
    TwentySix,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            _ => Err(format!("connectivity must be 6 or 26, got {v}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        }
    }
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::with_capacity(26);
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Lattice offsets within `radius_mm` of the origin under the given spacing.
pub fn ball_offsets(radius_mm: f64, spacing: [f64; 3]) -> Vec<[i64; 3]> {
    let r2 = radius_mm * radius_mm;
    let reach: [i64; 3] = std::array::from_fn(|a| (radius_mm / spacing[a]).floor() as i64);
    let mut out = Vec::new();
    for dz in -reach[2]..=reach[2] {
        for dy in -reach[1]..=reach[1] {
            for dx in -reach[0]..=reach[0] {
                let d = [dx, dy, dz];
                let dist2: f64 = (0..3).map(|a| (d[a] as f64 * spacing[a]).powi(2)).sum();
                if dist2 <= r2 {
                    out.push(d);
                }
            }
        }
    }
    out
}

/// Minkowski sum of the mask with a physical-radius ball.
pub fn dilate_sphere(mask: &BinaryMask, radius_mm: f64) -> Result<BinaryMask> {
    if !(radius_mm > 0.0 && radius_mm.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dilation radius must be positive, got {radius_mm}"
        )));
    }
    let g = *mask.geometry();
    let ball = ball_offsets(radius_mm, g.spacing);
    let [nx, ny, nz] = g.dims;
    let mut out = vec![false; g.len()];
    let src = mask.data();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !src[g.index([x, y, z])] {
                    continue;
                }
                for d in &ball {
                    let q = [x as i64 + d[0], y as i64 + d[1], z as i64 + d[2]];
                    if g.contains(q) {
                        out[g.index([q[0] as usize, q[1] as usize, q[2] as usize])] = true;
                    }
                }
            }
        }
    }
    Volume::from_raw(g, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabeling {
    pub geometry: Geometry,
    /// Component id per voxel, 0 for background.
    pub labels: Vec<u32>,
    /// `sizes[k]` is the voxel count of component `k + 1`.
    pub sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Sorted linear indices of every component, in id order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                out[l as usize - 1].push(i);
            }
        }
        out
    }
}

fn neighbors<'a>(
    g: &'a Geometry,
    index: usize,
    offsets: &'a [[i64; 3]],
) -> impl Iterator<Item = usize> + 'a {
    let p = g.coords(index);
    offsets.iter().filter_map(move |d| {
        let q = [p[0] as i64 + d[0], p[1] as i64 + d[1], p[2] as i64 + d[2]];
        g.contains(q)
            .then(|| g.index([q[0] as usize, q[1] as usize, q[2] as usize]))
    })
}

/// Labels connected components; ids ascend with each component's lowest linear index.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabeling {
    let g = *mask.geometry();
    let offsets = connectivity.offsets();
    let bits = mask.data();
    let mut labels = vec![0u32; g.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..g.len() {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            for j in neighbors(&g, i, &offsets) {
                if bits[j] && labels[j] == 0 {
                    labels[j] = id;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    ComponentLabeling {
        geometry: g,
        labels,
        sizes,
    }
}

/// Sorted indices of the component containing `seed` among voxels satisfying `inside`.
/// Returns an empty list if the seed itself is outside.
pub fn flood_component(
    g: &Geometry,
    seed: usize,
    connectivity: Connectivity,
    inside: impl Fn(usize) -> bool,
) -> Vec<usize> {
    if !inside(seed) {
        return Vec::new();
    }
    let offsets = connectivity.offsets();
    let mut seen = vec![false; g.len()];
    let mut queue = VecDeque::from([seed]);
    let mut out = Vec::new();
    seen[seed] = true;
    while let Some(i) = queue.pop_front() {
        out.push(i);
        for j in neighbors(g, i, &offsets) {
            if !seen[j] && inside(j) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Tightest box around the set voxels.
pub fn bounding_box(mask: &BinaryMask) -> Result<VoxelBox> {
    let g = mask.geometry();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for (i, _) in mask.data().iter().enumerate().filter(|(_, &b)| b) {
        let p = g.coords(i);
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
        any = true;
    }
    if !any {
        return Err(Error::EmptyMask("no voxels set; coarse segmentation found no pancreas"));
    }
    Ok(VoxelBox { lo, hi })
}

/// Grows every face by `ceil(margin_mm / spacing)` voxels, clamped to the grid.
pub fn expand_box(b: &VoxelBox, margin_mm: f64, g: &Geometry) -> Result<VoxelBox> {
    if !(margin_mm >= 0.0 && margin_mm.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "margin must be non-negative, got {margin_mm}"
        )));
    }
    let mut out = *b;
    for a in 0..3 {
        let grow = (margin_mm / g.spacing[a]).ceil() as usize;
        out.lo[a] = b.lo[a].saturating_sub(grow);
        out.hi[a] = (b.hi[a].saturating_add(grow)).min(g.dims[a] - 1);
    }
    Ok(out)
}

/// Copies the sub-volume inside `b`; world positions of kept voxels are unchanged.
pub fn crop<T: Copy>(vol: &Volume<T>, b: &VoxelBox) -> Result<Volume<T>> {
    let g = vol.geometry();
    if !b.fits(g.dims) {
        return Err(Error::BoxOutOfBounds {
            lo: b.lo,
            hi: b.hi,
            dims: g.dims,
        });
    }
    let dims = b.dims();
    let origin = g.world(b.lo);
    let cropped = Geometry::new(dims, g.spacing, origin)?;
    let src = vol.data();
    let mut data = Vec::with_capacity(cropped.len());
    for z in b.lo[2]..=b.hi[2] {
        for y in b.lo[1]..=b.hi[1] {
            let start = g.index([b.lo[0], y, z]);
            data.extend_from_slice(&src[start..start + dims[0]]);
        }
    }
    Volume::from_raw(cropped, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn mask_from(g: Geometry, set: &[[usize; 3]]) -> BinaryMask {
        let mut m = BinaryMask::filled(g, false).unwrap();
        for &p in set {
            m.set(p, true);
        }
        m
    }

    fn iso(n: usize) -> Geometry {
        Geometry::new([n, n, n], [1.0; 3], [0.0; 3]).unwrap()
    }

    #[test]
    fn single_voxel_ball_r2_has_33_voxels() {
        // oracle: integer offsets with x^2 + y^2 + z^2 <= 4
        let mut oracle = 0;
        for x in -3i32..=3 {
            for y in -3i32..=3 {
                for z in -3i32..=3 {
                    if x * x + y * y + z * z <= 4 {
                        oracle += 1;
                    }
                }
            }
        }
        assert_eq!(oracle, 33);
        let m = mask_from(iso(9), &[[4, 4, 4]]);
        assert_eq!(dilate_sphere(&m, 2.0).unwrap().count(), 33);
    }

    #[test]
    fn anisotropic_ball_reach() {
        let g = Geometry::new([9, 9, 9], [1.0, 1.0, 2.0], [0.0; 3]).unwrap();
        let d = dilate_sphere(&mask_from(g, &[[4, 4, 4]]), 2.0).unwrap();
        let mut reach = [0i64; 3];
        let mut count = 0;
        for i in d.indices() {
            let p = g.coords(i);
            for a in 0..3 {
                reach[a] = reach[a].max((p[a] as i64 - 4).abs());
            }
            count += 1;
        }
        assert_eq!(reach, [2, 2, 1]);
        // brute force over the same lattice: (dx)^2 + (dy)^2 + (2 dz)^2 <= 4
        let mut oracle = 0;
        for x in -4i32..=4 {
            for y in -4i32..=4 {
                for z in -4i32..=4 {
                    if x * x + y * y + 4 * z * z <= 4 {
                        oracle += 1;
                    }
                }
            }
        }
        assert_eq!(count, oracle);
    }

    #[test]
    fn dilation_of_empty_is_empty_and_radius_validated() {
        let m = BinaryMask::filled(iso(4), false).unwrap();
        assert_eq!(dilate_sphere(&m, 3.0).unwrap().count(), 0);
        assert!(dilate_sphere(&m, 0.0).is_err());
        assert!(dilate_sphere(&m, -1.0).is_err());
    }

    #[test]
    fn diagonal_voxels_depend_on_connectivity() {
        let m = mask_from(iso(3), &[[0, 0, 0], [1, 1, 1]]);
        assert_eq!(connected_components(&m, Connectivity::Six).count(), 2);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).count(), 1);
        let single = mask_from(iso(3), &[[2, 1, 0]]);
        let cc = connected_components(&single, Connectivity::TwentySix);
        assert_eq!(cc.sizes, vec![1]);
    }

    #[test]
    fn component_ids_follow_min_linear_index() {
        let g = Geometry::new([6, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        let m = BinaryMask::from_raw(g, vec![false, true, false, true, true, false]).unwrap();
        let cc = connected_components(&m, Connectivity::Six);
        assert_eq!(cc.labels, vec![0, 1, 0, 2, 2, 0]);
        assert_eq!(cc.sizes, vec![1, 2]);
    }

    /// O(n^2) oracle: union every pair of set voxels that are adjacent.
    fn pairwise_partition(m: &BinaryMask, conn: Connectivity) -> Vec<usize> {
        let g = m.geometry();
        let set = m.indices();
        let mut parent: Vec<usize> = (0..set.len()).collect();
        fn find(p: &mut Vec<usize>, i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            let mut c = i;
            while p[c] != r {
                let n = p[c];
                p[c] = r;
                c = n;
            }
            r
        }
        for a in 0..set.len() {
            for b in a + 1..set.len() {
                let pa = g.coords(set[a]);
                let pb = g.coords(set[b]);
                let d: Vec<i64> = (0..3).map(|k| (pa[k] as i64 - pb[k] as i64).abs()).collect();
                let adjacent = match conn {
                    Connectivity::Six => d.iter().sum::<i64>() == 1,
                    Connectivity::TwentySix => d.iter().all(|&x| x <= 1),
                };
                if adjacent {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        // canonical id: rank of each root by first appearance
        let mut ids = vec![0usize; g.len()];
        let mut root_id = std::collections::HashMap::new();
        for (k, &i) in set.iter().enumerate() {
            let r = find(&mut parent, k);
            let next = root_id.len() + 1;
            ids[i] = *root_id.entry(r).or_insert(next);
        }
        ids
    }

    #[test]
    fn components_match_pairwise_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..50 {
            let density = rng.gen_range(0.05..0.35);
            let g = iso(12);
            let data: Vec<bool> = (0..g.len()).map(|_| rng.gen_bool(density)).collect();
            let m = BinaryMask::from_raw(g, data).unwrap();
            for conn in [Connectivity::Six, Connectivity::TwentySix] {
                let cc = connected_components(&m, conn);
                let oracle = pairwise_partition(&m, conn);
                let ours: Vec<usize> = cc.labels.iter().map(|&l| l as usize).collect();
                assert_eq!(ours, oracle, "trial {trial} {conn:?}");
                assert_eq!(cc.sizes.iter().sum::<usize>(), m.count());
            }
        }
    }

    #[test]
    fn bounding_box_cases() {
        let g = Geometry::new([6, 5, 5], [1.0; 3], [0.0; 3]).unwrap();
        let b = bounding_box(&mask_from(g, &[[1, 1, 1], [4, 2, 3]])).unwrap();
        assert_eq!(b, VoxelBox { lo: [1, 1, 1], hi: [4, 2, 3] });
        let full = BinaryMask::filled(g, true).unwrap();
        assert_eq!(bounding_box(&full).unwrap(), g.full_box());
        let empty = BinaryMask::filled(g, false).unwrap();
        assert!(matches!(bounding_box(&empty), Err(Error::EmptyMask(_))));
    }

    #[test]
    fn bounding_box_matches_scan_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let g = Geometry::new([10, 7, 9], [1.0; 3], [0.0; 3]).unwrap();
        for _ in 0..50 {
            let pts: Vec<[usize; 3]> = (0..rng.gen_range(1..6))
                .map(|_| [rng.gen_range(0..10), rng.gen_range(0..7), rng.gen_range(0..9)])
                .collect();
            let b = bounding_box(&mask_from(g, &pts)).unwrap();
            for a in 0..3 {
                assert_eq!(b.lo[a], pts.iter().map(|p| p[a]).min().unwrap());
                assert_eq!(b.hi[a], pts.iter().map(|p| p[a]).max().unwrap());
            }
        }
    }

    #[test]
    fn expand_box_cases() {
        let g = Geometry::new([40, 40, 40], [2.0; 3], [0.0; 3]).unwrap();
        let b = VoxelBox { lo: [10, 12, 14], hi: [20, 22, 24] };
        assert_eq!(expand_box(&b, 0.0, &g).unwrap(), b);
        let e = expand_box(&b, 10.0, &g).unwrap();
        assert_eq!(e, VoxelBox { lo: [5, 7, 9], hi: [25, 27, 29] });
        let edge = VoxelBox { lo: [1, 0, 30], hi: [3, 2, 38] };
        let e = expand_box(&edge, 10.0, &g).unwrap();
        assert_eq!(e, VoxelBox { lo: [0, 0, 25], hi: [8, 7, 39] });
        assert!(expand_box(&b, -1.0, &g).is_err());
    }

    #[test]
    fn crop_cases() {
        let g = Geometry::new([5, 4, 3], [0.5, 1.5, 3.0], [10.0, 20.0, 30.0]).unwrap();
        let v = Volume::from_raw(g, (0..g.len()).map(|i| i as f32).collect()).unwrap();
        assert_eq!(crop(&v, &g.full_box()).unwrap(), v);
        let b = VoxelBox { lo: [1, 2, 1], hi: [3, 3, 2] };
        let c = crop(&v, &b).unwrap();
        assert_eq!(c.geometry().world([0, 0, 0]), g.world(b.lo));
        assert!(crop(&v, &VoxelBox { lo: [0, 0, 0], hi: [5, 0, 0] }).is_err());
    }

    #[test]
    fn random_crops_match_index_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let g = Geometry::new([9, 8, 7], [1.0, 2.0, 3.0], [0.0; 3]).unwrap();
        let v = Volume::from_raw(g, (0..g.len()).map(|_| rng.gen::<u16>()).collect()).unwrap();
        for _ in 0..30 {
            let lo: [usize; 3] = std::array::from_fn(|a| rng.gen_range(0..g.dims[a]));
            let hi: [usize; 3] = std::array::from_fn(|a| rng.gen_range(lo[a]..g.dims[a]));
            let b = VoxelBox { lo, hi };
            let c = crop(&v, &b).unwrap();
            let d = b.dims();
            for z in 0..d[2] {
                for y in 0..d[1] {
                    for x in 0..d[0] {
                        assert_eq!(c.get([x, y, z]), v.get([x + lo[0], y + lo[1], z + lo[2]]));
                    }
                }
            }
        }
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (1usize..7, 1usize..7, 1usize..6, any::<u64>(), 0.0f64..0.3).prop_map(|(nx, ny, nz, seed, p)| {
            let g = Geometry::new([nx, ny, nz], [1.0, 1.2, 2.5], [0.0; 3]).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            BinaryMask::from_raw(g, (0..g.len()).map(|_| rng.gen_bool(p)).collect()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dilation_is_extensive_and_monotone(m in arb_mask(), r in 0.5f64..4.0, seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let sup: Vec<bool> = m.data().iter().map(|&b| b || rng.gen_bool(0.2)).collect();
            let sup = BinaryMask::from_raw(*m.geometry(), sup).unwrap();
            let dm = dilate_sphere(&m, r).unwrap();
            prop_assert!(m.is_subset_of(&dm));
            prop_assert!(dm.is_subset_of(&dilate_sphere(&sup, r).unwrap()));
        }

        #[test]
        fn iterated_dilation_contains_single_dilation(m in arb_mask(), r1 in 0.5f64..2.5, r2 in 0.5f64..2.5) {
            let twice = dilate_sphere(&dilate_sphere(&m, r1).unwrap(), r2).unwrap();
            let once = dilate_sphere(&m, r1 + r2).unwrap();
            prop_assert!(twice.is_subset_of(&once));
        }

        #[test]
        fn crop_of_expanded_box_keeps_every_voxel(m in arb_mask(), margin in 0.0f64..6.0) {
            prop_assume!(m.count() > 0);
            let g = *m.geometry();
            let b = expand_box(&bounding_box(&m).unwrap(), margin, &g).unwrap();
            let c = crop(&m, &b).unwrap();
            prop_assert_eq!(c.count(), m.count());
        }
    }
}
