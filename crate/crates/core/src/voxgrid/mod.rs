//! Volumetric data types with physical geometry.
//!
//! Voxels are stored x-fastest: the linear index of `(x, y, z)` is
//! `x + nx * (y + ny * z)`. World coordinates of a voxel center are
//! `origin + index * spacing`.

mod nrrd;
mod resample;

pub use nrrd::{read_labels, read_likelihood, read_nrrd, read_scalar, write_nrrd, AnyVolume, NrrdSample};
pub use resample::{resample_inplane, Interpolation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class codes of a label volume.
pub mod codes {
    pub const BACKGROUND: u8 = 0;
    pub const TUMOR: u8 = 1;
    pub const PANCREAS: u8 = 2;
    pub const VEINS: u8 = 3;
    pub const ARTERIES: u8 = 4;
    pub const PANCREATIC_DUCT: u8 = 5;
    pub const COMMON_BILE_DUCT: u8 = 6;
    pub const CYST: u8 = 7;
    pub const THROMBOSIS: u8 = 8;

    /// Largest code in the table.
    pub const MAX: u8 = THROMBOSIS;

    pub fn is_known(code: u8) -> bool {
        code <= MAX
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    /// mm per voxel along each axis.
    pub spacing: [f64; 3],
    /// World position (mm) of the center of voxel (0, 0, 0).
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let g = Geometry {
            dims,
            spacing,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::Geometry(format!("zero dimension in {:?}", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::Geometry(format!(
                "spacing must be positive and finite, got {:?}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Geometry(format!("non-finite origin {:?}", self.origin)));
        }
        if self.dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none() {
            return Err(Error::Geometry("voxel count overflows".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, p: [usize; 3]) -> usize {
        p[0] + self.dims[0] * (p[1] + self.dims[1] * p[2])
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn contains(&self, p: [i64; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.dims[a])
    }

    pub fn world(&self, p: [usize; 3]) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + p[a] as f64 * self.spacing[a])
    }

    /// Nearest lattice point to a world position, if it lies inside the grid.
    pub fn world_to_voxel(&self, w: [f64; 3]) -> Option<[usize; 3]> {
        let mut p = [0usize; 3];
        for a in 0..3 {
            let f = ((w[a] - self.origin[a]) / self.spacing[a]).round();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            p[a] = f as usize;
        }
        Some(p)
    }

    /// Physical extent `[lo, hi]` of the grid along `axis`, measured at voxel edges.
    pub fn extent(&self, axis: usize) -> (f64, f64) {
        let lo = self.origin[axis] - 0.5 * self.spacing[axis];
        (lo, lo + self.dims[axis] as f64 * self.spacing[axis])
    }

    pub fn full_box(&self) -> VoxelBox {
        VoxelBox {
            lo: [0; 3],
            hi: [self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1],
        }
    }
}

/// Inclusive axis-aligned voxel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl VoxelBox {
    pub fn new(lo: [usize; 3], hi: [usize; 3]) -> Result<Self> {
        if (0..3).any(|a| lo[a] > hi[a]) {
            return Err(Error::InvalidParameter(format!("box lo {lo:?} exceeds hi {hi:?}")));
        }
        Ok(VoxelBox { lo, hi })
    }

    pub fn dims(&self) -> [usize; 3] {
        std::array::from_fn(|a| self.hi[a] - self.lo[a] + 1)
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    pub fn contains_box(&self, other: &VoxelBox) -> bool {
        self.contains(other.lo) && self.contains(other.hi)
    }

    pub fn fits(&self, dims: [usize; 3]) -> bool {
        (0..3).all(|a| self.lo[a] <= self.hi[a] && self.hi[a] < dims[a])
    }

    /// Maps a linear index inside a volume cropped to this box back to the
    /// linear index in the parent grid.
    pub fn to_parent_index(&self, local: usize, parent: &Geometry) -> usize {
        let d = self.dims();
        let x = local % d[0];
        let y = (local / d[0]) % d[1];
        let z = local / (d[0] * d[1]);
        parent.index([x + self.lo[0], y + self.lo[1], z + self.lo[2]])
    }
}

/// Dense 3D grid of voxels with physical geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    geometry: Geometry,
    data: Vec<T>,
}

pub type ScalarVolume = Volume<f32>;
pub type LabelVolume = Volume<u8>;
pub type BinaryMask = Volume<bool>;

impl<T> Volume<T> {
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_geometry<U>(&self, other: &Volume<U>) -> bool {
        self.geometry == other.geometry
    }

    pub(crate) fn require_same_geometry<U>(&self, other: &Volume<U>, what: &str) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.geometry, other.geometry
            )))
        }
    }
}

impl<T: Copy> Volume<T> {
    /// Builds a volume without checking voxel values; only the length is checked.
    pub fn from_raw(geometry: Geometry, data: Vec<T>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::Geometry(format!(
                "data length {} does not match {} voxels",
                data.len(),
                geometry.len()
            )));
        }
        Ok(Volume { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: T) -> Result<Self> {
        geometry.validate()?;
        Ok(Volume {
            data: vec![value; geometry.len()],
            geometry,
        })
    }

    #[inline]
    pub fn get(&self, p: [usize; 3]) -> T {
        self.data[self.geometry.index(p)]
    }

    #[inline]
    pub fn set(&mut self, p: [usize; 3], value: T) {
        let i = self.geometry.index(p);
        self.data[i] = value;
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            geometry: self.geometry,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Same data, different geometry; dims must agree.
    pub fn with_geometry(self, geometry: Geometry) -> Result<Self> {
        geometry.validate()?;
        if geometry.dims != self.geometry.dims {
            return Err(Error::GeometryMismatch(format!(
                "cannot relabel dims {:?} as {:?}",
                self.geometry.dims, geometry.dims
            )));
        }
        Ok(Volume {
            geometry,
            data: self.data,
        })
    }
}

impl ScalarVolume {
    pub fn new(geometry: Geometry, data: Vec<f32>) -> Result<Self> {
        Self::from_raw(geometry, data)
    }

    /// Checks `0 <= v <= 1` for every voxel.
    pub fn check_likelihood(&self) -> Result<()> {
        match self
            .data
            .iter()
            .position(|v| !(*v >= 0.0 && *v <= 1.0))
        {
            Some(index) => Err(Error::NotLikelihood {
                index,
                value: self.data[index],
            }),
            None => Ok(()),
        }
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }
}

impl LabelVolume {
    /// Builds a label volume, rejecting codes outside the code table.
    pub fn new(geometry: Geometry, data: Vec<u8>) -> Result<Self> {
        let v = Self::from_raw(geometry, data)?;
        v.check_codes()?;
        Ok(v)
    }

    pub fn check_codes(&self) -> Result<()> {
        match self.data.iter().position(|&c| !codes::is_known(c)) {
            Some(index) => Err(Error::UnknownLabel {
                code: self.data[index],
                index,
            }),
            None => Ok(()),
        }
    }

    /// Binary view: voxels whose code is in `set`.
    pub fn mask_of(&self, set: &[u8]) -> BinaryMask {
        self.map(|c| set.contains(&c))
    }

    /// Binary view: all non-background voxels.
    pub fn foreground(&self) -> BinaryMask {
        self.map(|c| c != codes::BACKGROUND)
    }
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Linear indices of set voxels in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Encodes the mask as a label volume using `code` for set voxels.
    pub fn to_labels(&self, code: u8) -> LabelVolume {
        self.map(|b| if b { code } else { codes::BACKGROUND })
    }
}
