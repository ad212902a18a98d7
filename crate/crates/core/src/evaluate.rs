//! Cohort evaluation: runs the pipeline over every case and model listed in
//! a manifest and assembles the report (per-case records, ROC, FROC, per-model
//! metric arrays, optional size subgroup).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{
    extract_candidates, lesion_size_axial, match_candidates, CandidateLesion, CandidateRecord,
    DuplicatePolicy, MatchStatus,
};
use crate::error::{Error, Result};
use crate::metrics::{
    self, froc, mean_curve_ci, pauc_froc, roc, split_scores, subgroup_filter, CaseResult, Cohort,
    FrocCurve, MeanCurve, RocCurve,
};
use crate::morphology::{connected_components, crop};
use crate::phantom::{Manifest, ManifestCase, PhantomCase};
use crate::pipeline::{ensemble_mean, extract_roi, mask_likelihood, patient_score, PipelineConfig};
use crate::voxgrid::{codes, read_labels, read_likelihood, read_scalar, LabelVolume, ScalarVolume};

pub const ENSEMBLE_ID: &str = "ensemble";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub fp_lo: f64,
    pub fp_hi: f64,
    pub dice_min: f64,
    pub duplicate_policy: DuplicatePolicy,
    /// When set, the report carries a block restricted to tumors below this size.
    pub subgroup_max_mm: Option<f64>,
    pub iterations: usize,
    pub seed: u64,
    pub comparisons: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            fp_lo: metrics::FROC_INTERVAL.0,
            fp_hi: metrics::FROC_INTERVAL.1,
            dice_min: metrics::DICE_MIN,
            duplicate_policy: DuplicatePolicy::Ignore,
            subgroup_max_mm: None,
            iterations: metrics::PERMUTATION_ITERATIONS,
            seed: 0,
            comparisons: metrics::DEFAULT_COMPARISONS,
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(0.0 <= self.fp_lo && self.fp_lo < self.fp_hi && self.fp_hi.is_finite()) {
            return bad(format!("FP interval [{}, {}] is invalid", self.fp_lo, self.fp_hi));
        }
        if !(self.dice_min > 0.0 && self.dice_min <= 1.0) {
            return bad(format!("dice_min must be in (0, 1], got {}", self.dice_min));
        }
        if let Some(s) = self.subgroup_max_mm {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("subgroup_max_mm must be > 0, got {s}"));
            }
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.comparisons == 0 {
            return bad("comparisons must be >= 1".into());
        }
        Ok(())
    }
}

/// Everything that controls a run; embedded verbatim in each report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub evaluation: EvaluationConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.evaluation.validate()
    }
}

/// Per-case outputs: one result and one candidate list per model, ensemble last.
#[derive(Debug, Clone)]
pub struct CaseEvaluation {
    pub case_id: String,
    pub results: Vec<CaseResult>,
    pub candidates: Vec<Vec<CandidateLesion>>,
}

pub fn model_ids(n_models: usize) -> Vec<String> {
    (0..n_models)
        .map(|m| format!("m{m:02}"))
        .chain(std::iter::once(ENSEMBLE_ID.to_string()))
        .collect()
}

/// Borrowed volumes of one case.
#[derive(Debug, Clone, Copy)]
pub struct CaseInput<'a> {
    pub image: &'a ScalarVolume,
    pub gt_labels: &'a LabelVolume,
    pub coarse_mask: &'a LabelVolume,
    /// One map per model.
    pub likelihoods: &'a [ScalarVolume],
    /// Organ segmentations used for masking, one per model; the dilated
    /// coarse mask is used when absent.
    pub segmentations: Option<&'a [LabelVolume]>,
}

impl<'a> From<&'a PhantomCase> for CaseInput<'a> {
    fn from(c: &'a PhantomCase) -> Self {
        CaseInput {
            image: &c.image,
            gt_labels: &c.gt_labels,
            coarse_mask: &c.coarse_mask,
            likelihoods: &c.likelihoods,
            segmentations: None,
        }
    }
}

/// Runs ROI extraction, masking, ensembling, candidate extraction and
/// matching for one case held in memory.
pub fn evaluate_volumes(case_id: &str, cohort: Cohort, input: CaseInput<'_>, cfg: &RunConfig) -> Result<CaseEvaluation> {
    let CaseInput { image, gt_labels: gt, coarse_mask: coarse, likelihoods: maps, segmentations } = input;
    image.require_same_geometry(gt, "image vs gt_labels")?;
    if maps.is_empty() {
        return Err(Error::EmptyInput("case lists no likelihood maps"));
    }
    for m in maps {
        image.require_same_geometry(m, "image vs likelihood")?;
        m.check_likelihood()?;
    }
    let p = &cfg.pipeline;
    let roi = extract_roi(image, coarse, p)?;
    let derived;
    let segmentations: &[LabelVolume] = match segmentations {
        Some(list) => {
            if list.len() != maps.len() {
                return Err(Error::InvalidParameter(format!(
                    "{} segmentations for {} likelihood maps",
                    list.len(),
                    maps.len()
                )));
            }
            list
        }
        None => {
            derived = vec![roi.dilated_mask.to_labels(codes::PANCREAS)];
            &derived
        }
    };
    let masked = maps
        .iter()
        .enumerate()
        .map(|(k, m)| mask_likelihood(m, &segmentations[k.min(segmentations.len() - 1)], &p.mask_codes))
        .collect::<Result<Vec<_>>>()?;
    let ensemble = ensemble_mean(&masked)?;

    let g = *gt.geometry();
    let lesions = connected_components(&gt.mask_of(&[codes::TUMOR]), p.connectivity).members();
    let sizes = lesions
        .iter()
        .map(|l| lesion_size_axial(l, &g))
        .collect::<Result<Vec<_>>>()?;
    if cohort == Cohort::Normal && !lesions.is_empty() {
        return Err(Error::InvalidParameter("normal case has tumor voxels".into()));
    }

    let ids = model_ids(maps.len());
    let mut results = Vec::with_capacity(ids.len());
    let mut candidates = Vec::with_capacity(ids.len());
    for (map, model_id) in masked.iter().chain(std::iter::once(&ensemble)).zip(ids) {
        let local = crop(map, &roi.bbox)?;
        let cands: Vec<CandidateLesion> = extract_candidates(&local, p)
            .into_iter()
            .map(|mut c| {
                for v in c.voxels.iter_mut() {
                    *v = roi.bbox.to_parent_index(*v, &g);
                }
                c
            })
            .collect();
        let ev = &cfg.evaluation;
        let matches = match_candidates(&cands, &lesions, ev.dice_min, ev.duplicate_policy);
        results.push(CaseResult {
            case_id: case_id.to_string(),
            cohort,
            model_id,
            patient_score: patient_score(&local) as f64,
            matches,
            gt_lesion_sizes_mm: sizes.clone(),
        });
        candidates.push(cands);
    }
    Ok(CaseEvaluation {
        case_id: case_id.to_string(),
        results,
        candidates,
    })
}

/// Loads and evaluates a single manifest entry; relative paths resolve against `base`.
pub fn evaluate_case(base: &Path, case: &ManifestCase, cfg: &RunConfig) -> Result<CaseEvaluation> {
    let run = || -> Result<CaseEvaluation> {
        let path = |p: &str| -> PathBuf { base.join(p) };
        let image = read_scalar(path(&case.image))?;
        let gt_labels = read_labels(path(&case.gt_labels))?;
        let coarse_mask = read_labels(path(&case.coarse_mask))?;
        let likelihoods = case
            .likelihoods
            .iter()
            .map(|p| read_likelihood(path(p)))
            .collect::<Result<Vec<_>>>()?;
        let segmentations = case
            .segmentations
            .as_ref()
            .map(|list| list.iter().map(|s| read_labels(path(s))).collect::<Result<Vec<_>>>())
            .transpose()?;
        let input = CaseInput {
            image: &image,
            gt_labels: &gt_labels,
            coarse_mask: &coarse_mask,
            likelihoods: &likelihoods,
            segmentations: segmentations.as_deref(),
        };
        evaluate_volumes(&case.id, case.cohort, input, cfg)
    };
    run().map_err(|e| e.in_case(&case.id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case_id: String,
    pub cohort: Cohort,
    pub model_id: String,
    pub patient_score: f64,
    pub candidates: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub ignored_duplicates: usize,
    pub lesions: usize,
    pub largest_lesion_mm: Option<f64>,
    pub candidate_confidences: Vec<f32>,
}

impl From<&CaseResult> for CaseSummary {
    fn from(r: &CaseResult) -> Self {
        CaseSummary {
            case_id: r.case_id.clone(),
            cohort: r.cohort,
            model_id: r.model_id.clone(),
            patient_score: r.patient_score,
            candidates: r.matches.candidates.len(),
            true_positives: r.matches.count(MatchStatus::TruePositive),
            false_positives: r.matches.count(MatchStatus::FalsePositive),
            ignored_duplicates: r.matches.count(MatchStatus::IgnoredDuplicate),
            lesions: r.lesion_count(),
            largest_lesion_mm: r.largest_lesion_mm(),
            candidate_confidences: r.matches.candidates.iter().map(|c| c.confidence).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model_id: String,
    pub roc: RocCurve,
    pub froc: FrocCurve,
}

/// Metric values of the individual models, in model order (ensemble excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricArrays {
    pub auc: Vec<f64>,
    pub pauc: Vec<f64>,
}

impl MetricArrays {
    pub fn get(&self, metric: &str) -> Option<&[f64]> {
        match metric {
            "auc" => Some(&self.auc),
            "pauc" => Some(&self.pauc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCurves {
    pub roc: MeanCurve,
    pub froc: MeanCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMetrics {
    /// Ensemble curves.
    pub roc: RocCurve,
    pub froc: FrocCurve,
    pub models: Vec<ModelMetrics>,
    pub metrics: MetricArrays,
    /// Vertical averages over the individual models (two or more models only).
    pub mean_curves: Option<MeanCurves>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub max_size_mm: f64,
    pub case_count: usize,
    pub pdac_count: usize,
    pub normal_count: usize,
    pub case_ids: Vec<String>,
    /// Absent when the subgroup lacks a cohort needed for the curves.
    pub metrics: Option<CohortMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: RunConfig,
    pub model_ids: Vec<String>,
    pub per_case: Vec<CaseSummary>,
    pub roc: RocCurve,
    pub froc: FrocCurve,
    pub models: Vec<ModelMetrics>,
    pub metrics: MetricArrays,
    pub mean_curves: Option<MeanCurves>,
    pub subgroup: Option<SubgroupReport>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn grid(hi: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| hi * k as f64 / steps as f64).collect()
}

fn with_pauc(mut curve: FrocCurve, ev: &EvaluationConfig) -> Result<FrocCurve> {
    curve.pauc = pauc_froc(&curve, ev.fp_lo, ev.fp_hi)?;
    Ok(curve)
}

/// Curves and metric arrays for `results`, grouped per model id.
pub fn cohort_metrics(results: &[CaseResult], ids: &[String], ev: &EvaluationConfig) -> Result<CohortMetrics> {
    let mut models = Vec::with_capacity(ids.len());
    for id in ids {
        let rows: Vec<CaseResult> = results.iter().filter(|r| &r.model_id == id).cloned().collect();
        let (pos, neg) = split_scores(&rows);
        models.push(ModelMetrics {
            model_id: id.clone(),
            roc: roc(&pos, &neg)?,
            froc: with_pauc(froc(&rows)?, ev)?,
        });
    }
    let ensemble = models.pop().ok_or(Error::EmptyInput("no models"))?;
    let metrics = MetricArrays {
        auc: models.iter().map(|m| m.roc.auc).collect(),
        pauc: models.iter().map(|m| m.froc.pauc).collect(),
    };
    let mean_curves = if models.len() >= 2 {
        let rocs: Vec<_> = models.iter().map(|m| m.roc.xy()).collect();
        let frocs: Vec<_> = models.iter().map(|m| m.froc.xy()).collect();
        Some(MeanCurves {
            roc: mean_curve_ci(&rocs, &grid(1.0, 100))?,
            froc: mean_curve_ci(&frocs, &grid(ev.fp_hi, 100))?,
        })
    } else {
        None
    };
    models.push(ensemble.clone());
    Ok(CohortMetrics {
        roc: ensemble.roc,
        froc: ensemble.froc,
        models,
        metrics,
        mean_curves,
    })
}

/// Collected outputs of a cohort run.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: Report,
    /// Sorted by case id.
    pub cases: Vec<CaseEvaluation>,
}

/// Evaluates every manifest case. Cases are processed in parallel on the
/// current rayon pool and results are ordered by case id, so the report does
/// not depend on manifest order or thread count. All failing cases are
/// reported together.
pub fn evaluate_manifest(manifest: &Manifest, base: &Path, cfg: &RunConfig) -> Result<Evaluation> {
    cfg.validate()?;
    if manifest.cases.is_empty() {
        return Err(Error::EmptyInput("manifest lists no cases"));
    }
    let n_models = manifest.cases[0].likelihoods.len();
    let mut seen = BTreeSet::new();
    for c in &manifest.cases {
        if !seen.insert(c.id.as_str()) {
            return Err(Error::InvalidParameter(format!("duplicate case id {}", c.id)));
        }
        if c.likelihoods.len() != n_models {
            return Err(Error::InvalidParameter(format!(
                "case {} has {} likelihood maps, expected {n_models}",
                c.id,
                c.likelihoods.len()
            )));
        }
    }
    let outcomes: Vec<Result<CaseEvaluation>> = manifest
        .cases
        .par_iter()
        .map(|c| evaluate_case(base, c, cfg))
        .collect();
    let mut cases = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(c) => cases.push(c),
            Err(e) => failures.push(e),
        }
    }
    if !failures.is_empty() {
        return Err(Error::CaseFailures(failures));
    }
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));

    let ids = model_ids(n_models);
    let results: Vec<CaseResult> = cases.iter().flat_map(|c| c.results.iter().cloned()).collect();
    let main = cohort_metrics(&results, &ids, &cfg.evaluation)?;
    let subgroup = match cfg.evaluation.subgroup_max_mm {
        None => None,
        Some(max) => {
            let kept = subgroup_filter(&results, max);
            let case_ids: Vec<String> = kept
                .iter()
                .filter(|r| r.model_id == ENSEMBLE_ID)
                .map(|r| r.case_id.clone())
                .collect();
            let count = |cohort| {
                kept.iter()
                    .filter(|r| r.model_id == ENSEMBLE_ID && r.cohort == cohort)
                    .count()
            };
            let (pdac_count, normal_count) = (count(Cohort::Pdac), count(Cohort::Normal));
            Some(SubgroupReport {
                max_size_mm: max,
                case_count: case_ids.len(),
                pdac_count,
                normal_count,
                case_ids,
                metrics: if pdac_count > 0 && normal_count > 0 {
                    Some(cohort_metrics(&kept, &ids, &cfg.evaluation)?)
                } else {
                    None
                },
            })
        }
    };
    let report = Report {
        config: cfg.clone(),
        model_ids: ids,
        per_case: results.iter().map(CaseSummary::from).collect(),
        roc: main.roc,
        froc: main.froc,
        models: main.models,
        metrics: main.metrics,
        mean_curves: main.mean_curves,
        subgroup,
    };
    Ok(Evaluation { report, cases })
}

impl Evaluation {
    /// Writes `report.json`, per-model `roc_<id>.csv`/`froc_<id>.csv`, and
    /// `candidates/<case>/<model>.json` under `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let write = |path: PathBuf, text: String| fs::write(&path, text).map_err(|e| Error::io_at(&path, e));
        fs::create_dir_all(out_dir).map_err(|e| Error::io_at(out_dir, e))?;
        write(out_dir.join("report.json"), self.report.to_json()?)?;
        for m in &self.report.models {
            write(out_dir.join(format!("roc_{}.csv", m.model_id)), metrics::roc_csv(&m.roc))?;
            write(out_dir.join(format!("froc_{}.csv", m.model_id)), metrics::froc_csv(&m.froc))?;
        }
        for c in &self.cases {
            let dir = out_dir.join("candidates").join(&c.case_id);
            fs::create_dir_all(&dir).map_err(|e| Error::io_at(&dir, e))?;
            for (id, cands) in self.report.model_ids.iter().zip(&c.candidates) {
                let records: Vec<CandidateRecord> = cands.iter().map(CandidateRecord::from).collect();
                let mut text = serde_json::to_string_pretty(&records)?;
                text.push('\n');
                write(dir.join(format!("{id}.json")), text)?;
            }
        }
        Ok(())
    }
}
