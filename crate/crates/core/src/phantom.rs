//! Seeded synthetic cohorts: ellipsoidal pancreas/tumor label volumes, CT-like
//! images, quarter-resolution coarse masks, and simulated detector
//! likelihood maps whose quality is controlled by [`DetectorParams`].

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Cohort;
use crate::voxgrid::{
    codes, resample_inplane, write_nrrd, Geometry, Interpolation, LabelVolume, ScalarVolume, Volume,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    /// Probability that the tumor shows up in the map at all.
    pub detect_prob: f64,
    pub blur_sigma_mm: f64,
    /// Standard deviation of additive noise before clipping.
    pub noise_sigma: f64,
    /// Mean number of false blobs per case.
    pub fp_blob_rate: f64,
    pub fp_blob_peak_range: [f64; 2],
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            detect_prob: 0.85,
            blur_sigma_mm: 1.5,
            noise_sigma: 0.01,
            fp_blob_rate: 1.0,
            fp_blob_peak_range: [0.05, 0.75],
        }
    }
}

impl DetectorParams {
    /// Perfect detector: tumor always found, no noise, no false blobs.
    pub fn oracle() -> Self {
        DetectorParams {
            detect_prob: 1.0,
            noise_sigma: 0.0,
            fp_blob_rate: 0.0,
            ..DetectorParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(0.0..=1.0).contains(&self.detect_prob) {
            return bad("detect_prob must be in [0, 1]");
        }
        if !(self.blur_sigma_mm >= 0.0 && self.blur_sigma_mm.is_finite()) {
            return bad("blur_sigma_mm must be >= 0");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be >= 0");
        }
        if !(self.fp_blob_rate >= 0.0 && self.fp_blob_rate.is_finite()) {
            return bad("fp_blob_rate must be >= 0");
        }
        let [lo, hi] = self.fp_blob_peak_range;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return bad("fp_blob_peak_range must satisfy 0 < lo <= hi <= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomParams {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Per-axis `[min, max]` semi-axis of the pancreas ellipsoid (mm).
    pub pancreas_radius_mm: [[f64; 2]; 3],
    /// `[min, max]` axial diameter of the tumor (mm).
    pub tumor_diameter_mm: [f64; 2],
    /// In-plane downsampling factor of the coarse mask.
    pub coarse_factor: usize,
    pub detector: DetectorParams,
    pub seed: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            dims: [96, 96, 48],
            spacing: [1.5, 1.5, 3.0],
            pancreas_radius_mm: [[34.0, 46.0], [22.0, 30.0], [22.0, 30.0]],
            tumor_diameter_mm: [4.0, 25.0],
            coarse_factor: 4,
            detector: DetectorParams::default(),
            seed: 0,
        }
    }
}

impl PhantomParams {
    pub fn geometry(&self) -> Result<Geometry> {
        let origin = std::array::from_fn(|a| -0.5 * (self.dims[a] - 1) as f64 * self.spacing[a]);
        Geometry::new(self.dims, self.spacing, origin)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.geometry()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        for a in 0..3 {
            let [lo, hi] = self.pancreas_radius_mm[a];
            if !(0.0 < lo && lo <= hi) {
                return bad(format!("pancreas radius range on axis {a} is invalid"));
            }
            let (e0, e1) = g.extent(a);
            if hi + 5.0 > 0.5 * (e1 - e0) {
                return bad(format!("pancreas radius {hi} mm does not fit axis {a}"));
            }
        }
        let [dlo, dhi] = self.tumor_diameter_mm;
        if !(0.0 < dlo && dlo <= dhi) {
            return bad("tumor diameter range is invalid".into());
        }
        if self.coarse_factor == 0 {
            return bad("coarse_factor must be >= 1".into());
        }
        self.detector.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomCase {
    pub case_id: String,
    pub cohort: Cohort,
    pub image: ScalarVolume,
    pub gt_labels: LabelVolume,
    pub coarse_mask: LabelVolume,
    pub likelihoods: Vec<ScalarVolume>,
    /// Seed the case was generated from; model seeds derive from it.
    pub case_seed: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable seed for a named case: mixes the cohort seed with an FNV-1a hash of the id.
pub fn case_seed(seed: u64, case_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in case_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

pub fn model_seed(case_seed: u64, model: usize) -> u64 {
    splitmix64(case_seed ^ splitmix64(model as u64 + 1))
}

struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, w: [f64; 3]) -> bool {
        (0..3)
            .map(|a| ((w[a] - self.center[a]) / self.radii[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }

    /// Sufficient condition for `inner` to lie inside `self` (axis-aligned).
    fn encloses(&self, inner: &Ellipsoid) -> bool {
        (0..3)
            .map(|a| {
                ((inner.center[a] - self.center[a]).abs() + inner.radii[a]) / self.radii[a]
            })
            .map(|t| t * t)
            .sum::<f64>()
            <= 1.0
    }
}

const MAX_FIT_ATTEMPTS: usize = 64;

/// Generates one case. Output depends only on `(params.seed, case_seed, cohort)`.
pub fn gen_case(params: &PhantomParams, case_seed: u64, cohort: Cohort) -> Result<PhantomCase> {
    params.validate()?;
    let g = params.geometry()?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(params.seed) ^ case_seed);

    let radii: [f64; 3] = std::array::from_fn(|a| {
        let [lo, hi] = params.pancreas_radius_mm[a];
        rng.gen_range(lo..=hi)
    });
    let center: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-5.0..=5.0));
    let pancreas = Ellipsoid { center, radii };
    let tumor = match cohort {
        Cohort::Normal => None,
        Cohort::Pdac => {
            let [dlo, dhi] = params.tumor_diameter_mm;
            let r = 0.5 * rng.gen_range(dlo..=dhi);
            let t_radii = [r, r * rng.gen_range(0.8..=1.0), r * rng.gen_range(0.8..=1.2)];
            let direction: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0));
            // pull the tumor toward the pancreas center until it fits; the
            // size is never resampled so the size distribution stays as drawn
            let mut placed = None;
            for k in 0..MAX_FIT_ATTEMPTS {
                let shrink = 1.0 - k as f64 / (MAX_FIT_ATTEMPTS - 1) as f64;
                let want: [f64; 3] = std::array::from_fn(|a| {
                    center[a] + shrink * direction[a] * (radii[a] - t_radii[a]).max(0.0)
                });
                // snap to a voxel center so the tumor always contains at least one voxel
                let Some(p) = g.world_to_voxel(want) else { continue };
                let t = Ellipsoid { center: g.world(p), radii: t_radii };
                if pancreas.encloses(&t) {
                    placed = Some(t);
                    break;
                }
            }
            Some(placed.ok_or(Error::PhantomFit(MAX_FIT_ATTEMPTS))?)
        }
    };

    let mut labels = vec![codes::BACKGROUND; g.len()];
    for (i, l) in labels.iter_mut().enumerate() {
        let w = g.world(g.coords(i));
        if tumor.as_ref().is_some_and(|t| t.contains(w)) {
            *l = codes::TUMOR;
        } else if pancreas.contains(w) {
            *l = codes::PANCREAS;
        }
    }
    let gt_labels = LabelVolume::new(g, labels)?;

    let noise = Normal::new(0.0, 8.0).expect("valid sigma");
    let image_data = gt_labels
        .data()
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let w = g.world(g.coords(i));
            let background = 40.0 + 10.0 * (w[0] / 20.0).sin() * (w[1] / 25.0).cos() + 0.1 * w[2];
            let tissue = match c {
                codes::TUMOR => 70.0,
                codes::PANCREAS => 100.0,
                _ => background,
            };
            (tissue + noise.sample(&mut rng)) as f32
        })
        .collect();
    let image = ScalarVolume::new(g, image_data)?;

    let union = gt_labels.foreground().to_labels(codes::PANCREAS);
    let f = params.coarse_factor;
    let coarse_mask = resample_inplane(
        &union,
        (g.dims[0] / f).max(1),
        (g.dims[1] / f).max(1),
        Interpolation::Nearest,
    )?;

    Ok(PhantomCase {
        case_id: format!("{}-{case_seed:016x}", cohort_name(cohort)),
        cohort,
        image,
        gt_labels,
        coarse_mask,
        likelihoods: Vec::new(),
        case_seed,
    })
}

fn cohort_name(c: Cohort) -> &'static str {
    match c {
        Cohort::Pdac => "pdac",
        Cohort::Normal => "normal",
    }
}

impl PhantomCase {
    /// Replaces the likelihood maps with `n_models` simulated detector outputs.
    pub fn simulate_models(&mut self, detector: &DetectorParams, n_models: usize) -> Result<()> {
        self.likelihoods = (0..n_models)
            .map(|m| simulate_likelihood(&self.gt_labels, detector, model_seed(self.case_seed, m)))
            .collect::<Result<_>>()?;
        Ok(())
    }
}

/// Separable Gaussian blur, kernel truncated at 3 sigma along each axis.
fn gaussian_blur(data: &[f64], g: &Geometry, sigma_mm: f64) -> Vec<f64> {
    let mut cur = data.to_vec();
    for axis in 0..3 {
        let s = sigma_mm / g.spacing[axis];
        if s < 1e-3 {
            continue;
        }
        let r = (3.0 * s).ceil() as i64;
        let kernel: Vec<f64> = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * s * s)).exp()).collect();
        let norm: f64 = kernel.iter().sum();
        let mut next = vec![0.0; cur.len()];
        for (i, out) in next.iter_mut().enumerate() {
            let p = g.coords(i);
            let mut acc = 0.0;
            for (k, w) in (-r..=r).zip(&kernel) {
                let q = p[axis] as i64 + k;
                if q >= 0 && (q as usize) < g.dims[axis] {
                    let mut pq = p;
                    pq[axis] = q as usize;
                    acc += w * cur[g.index(pq)];
                }
            }
            *out = acc / norm;
        }
        cur = next;
    }
    cur
}

fn add_blob(map: &mut [f64], g: &Geometry, center: [usize; 3], peak: f64, sigma_mm: f64) {
    let reach: [i64; 3] = std::array::from_fn(|a| (3.0 * sigma_mm / g.spacing[a]).ceil() as i64);
    for dz in -reach[2]..=reach[2] {
        for dy in -reach[1]..=reach[1] {
            for dx in -reach[0]..=reach[0] {
                let q = [center[0] as i64 + dx, center[1] as i64 + dy, center[2] as i64 + dz];
                if !g.contains(q) {
                    continue;
                }
                let d2 = (dx as f64 * g.spacing[0]).powi(2)
                    + (dy as f64 * g.spacing[1]).powi(2)
                    + (dz as f64 * g.spacing[2]).powi(2);
                let v = peak * (-d2 / (2.0 * sigma_mm * sigma_mm)).exp();
                let i = g.index([q[0] as usize, q[1] as usize, q[2] as usize]);
                map[i] = map[i].max(v);
            }
        }
    }
}

/// Simulated detector output for a labeled case.
///
/// With probability `detect_prob` the tumor appears as a blurred plateau
/// rescaled to a peak in `[0.7, 1.0]`. A Poisson number of Gaussian false
/// blobs follows, half centered in the pancreas and half anywhere, then
/// additive Gaussian noise; the result is clipped to `[0, 1]`.
pub fn simulate_likelihood(
    gt_labels: &LabelVolume,
    detector: &DetectorParams,
    model_seed: u64,
) -> Result<ScalarVolume> {
    detector.validate()?;
    let g = *gt_labels.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(model_seed);
    let mut map = vec![0f64; g.len()];

    let tumor: Vec<f64> = gt_labels
        .data()
        .iter()
        .map(|&c| if c == codes::TUMOR { 1.0 } else { 0.0 })
        .collect();
    let detected = rng.gen_bool(detector.detect_prob);
    let peak = rng.gen_range(0.7..=1.0);
    if detected && tumor.iter().any(|&v| v > 0.0) {
        let blurred = if detector.blur_sigma_mm > 0.0 {
            gaussian_blur(&tumor, &g, detector.blur_sigma_mm)
        } else {
            tumor
        };
        let max = blurred.iter().copied().fold(0.0, f64::max);
        for (m, b) in map.iter_mut().zip(&blurred) {
            *m = b * peak / max;
        }
    }

    if detector.fp_blob_rate > 0.0 {
        let n = Poisson::new(detector.fp_blob_rate)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(&mut rng) as usize;
        let pancreas: Vec<usize> = gt_labels
            .data()
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c == codes::PANCREAS).then_some(i))
            .collect();
        let [lo, hi] = detector.fp_blob_peak_range;
        for _ in 0..n {
            let at = if !pancreas.is_empty() && rng.gen_bool(0.5) {
                pancreas[rng.gen_range(0..pancreas.len())]
            } else {
                rng.gen_range(0..g.len())
            };
            let peak = rng.gen_range(lo..=hi);
            let sigma = rng.gen_range(2.0..=5.0);
            add_blob(&mut map, &g, g.coords(at), peak, sigma);
        }
    }

    if detector.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, detector.noise_sigma)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for m in map.iter_mut() {
            *m += noise.sample(&mut rng);
        }
    }
    let data = map.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
    ScalarVolume::new(g, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCase {
    pub id: String,
    pub cohort: Cohort,
    pub image: String,
    pub gt_labels: String,
    pub coarse_mask: String,
    /// One likelihood map per model.
    pub likelihoods: Vec<String>,
    /// Optional per-model organ segmentations used for masking; when absent
    /// the dilated coarse mask is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentations: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub cases: Vec<ManifestCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PhantomParams>,
    #[serde(default)]
    pub seed: u64,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io_at(path, e))
    }
}

/// Case ids in cohort order: `pdac_000..`, then `normal_000..`.
pub fn cohort_ids(n_pdac: usize, n_normal: usize) -> Vec<(String, Cohort)> {
    (0..n_pdac)
        .map(|k| (format!("pdac_{k:03}"), Cohort::Pdac))
        .chain((0..n_normal).map(|k| (format!("normal_{k:03}"), Cohort::Normal)))
        .collect()
}

/// Generates a named case with its simulated models.
pub fn gen_named_case(params: &PhantomParams, id: &str, cohort: Cohort, n_models: usize) -> Result<PhantomCase> {
    let mut case = gen_case(params, case_seed(params.seed, id), cohort)?;
    case.case_id = id.to_string();
    case.simulate_models(&params.detector, n_models)?;
    Ok(case)
}

/// Writes a cohort under `out_dir` (one sub-directory per case) plus
/// `manifest.json`; paths in the manifest are relative to `out_dir`.
pub fn gen_cohort(
    n_pdac: usize,
    n_normal: usize,
    n_models: usize,
    params: &PhantomParams,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest> {
    if n_models == 0 {
        return Err(Error::InvalidParameter("n_models must be >= 1".into()));
    }
    params.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io_at(out_dir, e))?;
    let ids = cohort_ids(n_pdac, n_normal);
    let cases = ids
        .par_iter()
        .map(|(id, cohort)| -> Result<ManifestCase> {
            let case = gen_named_case(params, id, *cohort, n_models)?;
            let dir = out_dir.join(id);
            fs::create_dir_all(&dir).map_err(|e| Error::io_at(&dir, e))?;
            let rel = |name: &str| -> (PathBuf, String) { (dir.join(name), format!("{id}/{name}")) };
            let (p, image) = rel("image.nrrd");
            write_nrrd(&case.image, p)?;
            let (p, gt_labels) = rel("gt_labels.nrrd");
            write_nrrd(&case.gt_labels, p)?;
            let (p, coarse_mask) = rel("coarse_mask.nrrd");
            write_nrrd(&case.coarse_mask, p)?;
            let mut likelihoods = Vec::with_capacity(n_models);
            for (m, lik) in case.likelihoods.iter().enumerate() {
                let (p, name) = rel(&format!("likelihood_m{m:02}.nrrd"));
                write_nrrd(lik, p)?;
                likelihoods.push(name);
            }
            Ok(ManifestCase {
                id: id.clone(),
                cohort: *cohort,
                image,
                gt_labels,
                coarse_mask,
                likelihoods,
                segmentations: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        cases,
        params: Some(params.clone()),
        seed: params.seed,
    };
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Volume constructor shared by tests and examples: all voxels of `g` set to `v`.
pub fn constant_map(g: Geometry, v: f32) -> Result<ScalarVolume> {
    Volume::filled(g, v)
}
