//! Patient-level ROC and lesion-level FROC for an in-memory phantom cohort
//! scored by one imperfect simulated detector.
//!
//! cargo run --example roc_froc

use rayon::prelude::*;
use voxdet::evaluate::{evaluate_volumes, RunConfig};
use voxdet::metrics::{auc_rank_statistic, froc, froc_csv, roc, roc_csv, split_scores, CaseResult};
use voxdet::phantom::{cohort_ids, gen_named_case, DetectorParams, PhantomParams};

fn main() -> voxdet::Result<()> {
    let params = PhantomParams {
        dims: [64, 64, 32],
        pancreas_radius_mm: [[26.0, 32.0], [18.0, 22.0], [18.0, 22.0]],
        detector: DetectorParams {
            detect_prob: 0.8,
            fp_blob_rate: 2.0,
            noise_sigma: 0.03,
            ..DetectorParams::default()
        },
        seed: 31,
        ..PhantomParams::default()
    };
    let cfg = RunConfig::default();
    let ids = cohort_ids(25, 25);
    let results: Vec<CaseResult> = ids
        .par_iter()
        .map(|(id, cohort)| {
            let case = gen_named_case(&params, id, *cohort, 1)?;
            let ev = evaluate_volumes(id, *cohort, (&case).into(), &cfg)?;
            // first entry is the single model; the ensemble of one model is identical
            Ok(ev.results.into_iter().next().unwrap())
        })
        .collect::<voxdet::Result<_>>()?;

    let (pos, neg) = split_scores(&results);
    let r = roc(&pos, &neg)?;
    println!(
        "ROC: {} points, AUC {:.4} (rank statistic {:.4})",
        r.points.len(),
        r.auc,
        auc_rank_statistic(&pos, &neg)?
    );
    print!("{}", roc_csv(&r).lines().take(6).map(|l| format!("  {l}\n")).collect::<String>());

    let f = froc(&results)?;
    println!("FROC: {} points, pAUC over [0.001, 5] FP/case = {:.4} (max 4.999)", f.points.len(), f.pauc);
    for target in [0.125, 0.25, 0.5, 1.0, 2.0] {
        let sens = f
            .points
            .iter()
            .filter(|p| p.fp_per_case <= target)
            .map(|p| p.sensitivity)
            .fold(0.0, f64::max);
        println!("  sensitivity at {target:>5} FP/case: {sens:.2}");
    }
    let csv = froc_csv(&f);
    println!("  ({} CSV lines)", csv.lines().count());
    Ok(())
}
