//! Inference-side pipeline: ROI extraction from a coarse organ mask,
//! organ-mask post-processing of likelihood maps, ensembling and
//! patient-level scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{bounding_box, crop, dilate_sphere, expand_box, Connectivity};
use crate::voxgrid::{
    codes, resample_inplane, BinaryMask, Interpolation, LabelVolume, ScalarVolume, Volume,
    VoxelBox,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Radius of the spherical kernel used to close gaps in the upsampled coarse mask.
    pub dilate_radius_mm: f64,
    /// Margin added around the dilated mask's bounding box.
    pub margin_mm: f64,
    /// Candidate region threshold as a fraction of the candidate's peak.
    pub rel_threshold: f64,
    pub max_lesions: usize,
    /// Peaks below this value end candidate extraction.
    pub peak_floor: f64,
    pub connectivity: Connectivity,
    /// Label codes kept when masking likelihood maps.
    pub mask_codes: Vec<u8>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dilate_radius_mm: 5.0,
            margin_mm: 20.0,
            rel_threshold: 0.4,
            max_lesions: 5,
            peak_floor: 1e-3,
            connectivity: Connectivity::TwentySix,
            mask_codes: vec![codes::TUMOR, codes::PANCREAS],
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.rel_threshold > 0.0 && self.rel_threshold < 1.0) {
            return bad(format!("rel_threshold must be in (0, 1), got {}", self.rel_threshold));
        }
        if !(self.peak_floor >= 0.0 && self.peak_floor.is_finite()) {
            return bad(format!("peak_floor must be >= 0, got {}", self.peak_floor));
        }
        if self.max_lesions == 0 {
            return bad("max_lesions must be >= 1".into());
        }
        if !(self.dilate_radius_mm > 0.0 && self.dilate_radius_mm.is_finite()) {
            return bad(format!("dilate_radius_mm must be > 0, got {}", self.dilate_radius_mm));
        }
        if !(self.margin_mm >= 0.0 && self.margin_mm.is_finite()) {
            return bad(format!("margin_mm must be >= 0, got {}", self.margin_mm));
        }
        if let Some(c) = self.mask_codes.iter().find(|&&c| !codes::is_known(c)) {
            return bad(format!("mask code {c} is not in the label table"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RoiResult {
    pub roi_image: ScalarVolume,
    pub bbox: VoxelBox,
    /// Upsampled and dilated coarse mask on the full image grid.
    pub dilated_mask: BinaryMask,
}

/// Upsamples `coarse_mask` (any non-background code counts) to the image
/// grid, dilates it, and crops the image to its margin-expanded bounding box.
pub fn extract_roi(
    image: &ScalarVolume,
    coarse_mask: &LabelVolume,
    cfg: &PipelineConfig,
) -> Result<RoiResult> {
    let g = *image.geometry();
    let c = coarse_mask.geometry();
    if c.dims[2] != g.dims[2] {
        return Err(Error::ExtentMismatch(format!(
            "coarse mask has {} slices, image has {}",
            c.dims[2], g.dims[2]
        )));
    }
    for axis in 0..3 {
        let (a0, a1) = g.extent(axis);
        let (b0, b1) = c.extent(axis);
        let tol = 0.5 * c.spacing[axis];
        if (a0 - b0).abs() > tol || (a1 - b1).abs() > tol {
            return Err(Error::ExtentMismatch(format!(
                "axis {axis}: image [{a0}, {a1}] vs coarse mask [{b0}, {b1}] mm"
            )));
        }
    }
    if coarse_mask.data().iter().all(|&v| v == codes::BACKGROUND) {
        return Err(Error::EmptyMask("coarse mask contains no pancreas"));
    }
    let upsampled = resample_inplane(coarse_mask, g.dims[0], g.dims[1], Interpolation::Nearest)?
        .with_geometry(g)?
        .foreground();
    let dilated_mask = dilate_sphere(&upsampled, cfg.dilate_radius_mm)?;
    let bbox = expand_box(&bounding_box(&dilated_mask)?, cfg.margin_mm, &g)?;
    let roi_image = crop(image, &bbox)?;
    Ok(RoiResult {
        roi_image,
        bbox,
        dilated_mask,
    })
}

/// Zeroes likelihood outside voxels whose segmentation code is in `mask_codes`.
pub fn mask_likelihood(
    likelihood: &ScalarVolume,
    segmentation: &LabelVolume,
    mask_codes: &[u8],
) -> Result<ScalarVolume> {
    likelihood.require_same_geometry(segmentation, "likelihood vs segmentation")?;
    let data = likelihood
        .data()
        .iter()
        .zip(segmentation.data())
        .map(|(&v, c)| if mask_codes.contains(c) { v } else { 0.0 })
        .collect();
    Volume::from_raw(*likelihood.geometry(), data)
}

/// Voxelwise mean of several likelihood maps.
pub fn ensemble_mean(maps: &[ScalarVolume]) -> Result<ScalarVolume> {
    let first = maps.first().ok_or(Error::EmptyInput("ensemble needs at least one map"))?;
    for m in &maps[1..] {
        first.require_same_geometry(m, "ensemble members")?;
    }
    let mut acc = vec![0f64; first.len()];
    for m in maps {
        for (a, &v) in acc.iter_mut().zip(m.data()) {
            *a += v as f64;
        }
    }
    let n = maps.len() as f64;
    let data = acc.into_iter().map(|s| (s / n) as f32).collect();
    Volume::from_raw(*first.geometry(), data)
}

/// Patient-level tumor likelihood: the map's maximum (0 for an all-zero map).
pub fn patient_score(likelihood: &ScalarVolume) -> f32 {
    likelihood.max_value().max(0.0)
}
