use serde::{Deserialize, Serialize};

use super::{Geometry, Volume};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Linear,
    Nearest,
}

/// Voxel types that can be resampled. Labels only support nearest lookup.
pub trait Resample: Copy {
    fn lerp2(q: [[Self; 2]; 2], fx: f64, fy: f64) -> Option<Self>;
}

impl Resample for f32 {
    fn lerp2(q: [[Self; 2]; 2], fx: f64, fy: f64) -> Option<Self> {
        // a + f * (b - a) is exact when a == b
        let lerp = |a: f32, b: f32, f: f64| a as f64 + f * (b as f64 - a as f64);
        let r0 = lerp(q[0][0], q[0][1], fx);
        let r1 = lerp(q[1][0], q[1][1], fx);
        Some((r0 + fy * (r1 - r0)) as f32)
    }
}

impl Resample for u8 {
    fn lerp2(_: [[Self; 2]; 2], _: f64, _: f64) -> Option<Self> {
        None
    }
}

impl Resample for bool {
    fn lerp2(_: [[Self; 2]; 2], _: f64, _: f64) -> Option<Self> {
        None
    }
}

/// Source index nearest to the center of target voxel `i` when `n_src`
/// voxels are resampled to `n_dst` over the same extent. Ties go to the
/// lower source index.
///
/// In units of `1 / (2 * n_dst)` source voxels, the target center sits at
/// `(2i + 1) * n_src - n_dst`; the chosen index is the ceiling of that
/// position minus one half.
pub(crate) fn nearest_source(i: usize, n_src: usize, n_dst: usize) -> usize {
    let num = (2 * i as i64 + 1) * n_src as i64 - 2 * n_dst as i64;
    let den = 2 * n_dst as i64;
    let j = num.div_euclid(den) + i64::from(num.rem_euclid(den) != 0);
    j.clamp(0, n_src as i64 - 1) as usize
}

/// Continuous source coordinate of target voxel center `i`, clamped to the grid.
fn source_position(i: usize, n_src: usize, n_dst: usize) -> f64 {
    let u = (i as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5;
    u.clamp(0.0, (n_src - 1) as f64)
}

/// Geometry after an in-plane resample to `nx` x `ny` that keeps the
/// physical extent (voxel-edge box) fixed.
pub fn resampled_geometry(g: &Geometry, nx: usize, ny: usize) -> Result<Geometry> {
    let mut dims = g.dims;
    let mut spacing = g.spacing;
    let mut origin = g.origin;
    for (axis, n) in [(0, nx), (1, ny)] {
        let (lo, _) = g.extent(axis);
        spacing[axis] = g.spacing[axis] * g.dims[axis] as f64 / n as f64;
        origin[axis] = lo + 0.5 * spacing[axis];
        dims[axis] = n;
    }
    Geometry::new(dims, spacing, origin)
}

/// Resamples every axial slice to `target_nx` x `target_ny`; z is untouched.
pub fn resample_inplane<T: Resample>(
    vol: &Volume<T>,
    target_nx: usize,
    target_ny: usize,
    mode: Interpolation,
) -> Result<Volume<T>> {
    if target_nx == 0 || target_ny == 0 {
        return Err(Error::InvalidParameter(format!(
            "resample target {target_nx}x{target_ny} must be at least 1x1"
        )));
    }
    let src = vol.geometry();
    let [sx, sy, nz] = src.dims;
    if mode == Interpolation::Linear {
        let probe = vol.data()[0];
        if T::lerp2([[probe; 2]; 2], 0.0, 0.0).is_none() {
            return Err(Error::LinearOnLabels);
        }
    }
    let geometry = resampled_geometry(src, target_nx, target_ny)?;
    let mut data = Vec::with_capacity(geometry.len());
    let src_data = vol.data();

    match mode {
        Interpolation::Nearest => {
            let xs: Vec<usize> = (0..target_nx).map(|i| nearest_source(i, sx, target_nx)).collect();
            let ys: Vec<usize> = (0..target_ny).map(|j| nearest_source(j, sy, target_ny)).collect();
            for z in 0..nz {
                for &y in &ys {
                    let row = sx * (y + sy * z);
                    data.extend(xs.iter().map(|&x| src_data[row + x]));
                }
            }
        }
        Interpolation::Linear => {
            let taps = |n_dst: usize, n_src: usize| -> Vec<(usize, usize, f64)> {
                (0..n_dst)
                    .map(|i| {
                        let u = source_position(i, n_src, n_dst);
                        let i0 = u.floor() as usize;
                        let i1 = (i0 + 1).min(n_src - 1);
                        (i0, i1, u - i0 as f64)
                    })
                    .collect()
            };
            let xt = taps(target_nx, sx);
            let yt = taps(target_ny, sy);
            for z in 0..nz {
                for &(y0, y1, fy) in &yt {
                    let r0 = sx * (y0 + sy * z);
                    let r1 = sx * (y1 + sy * z);
                    for &(x0, x1, fx) in &xt {
                        let q = [
                            [src_data[r0 + x0], src_data[r0 + x1]],
                            [src_data[r1 + x0], src_data[r1 + x1]],
                        ];
                        data.push(T::lerp2(q, fx, fy).ok_or(Error::LinearOnLabels)?);
                    }
                }
            }
        }
    }
    Volume::from_raw(geometry, data)
}
