//! Full run: generate a cohort with several simulated models, evaluate it,
//! write the report and curve files, and print the headline numbers.
//!
//! cargo run --release --example end_to_end [-- OUT_DIR]

use voxdet::evaluate::{evaluate_manifest, RunConfig};
use voxdet::metrics::compare;
use voxdet::phantom::{gen_cohort, DetectorParams, PhantomParams};

fn main() -> voxdet::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("voxdet-end-to-end"));
    let mut cfg = RunConfig::default();
    cfg.evaluation.subgroup_max_mm = Some(20.0);

    let mut reports = Vec::new();
    for (name, detector) in [
        ("sharp", DetectorParams { detect_prob: 0.95, fp_blob_rate: 0.5, ..DetectorParams::default() }),
        ("noisy", DetectorParams { detect_prob: 0.7, fp_blob_rate: 3.0, noise_sigma: 0.05, ..DetectorParams::default() }),
    ] {
        let params = PhantomParams { detector, seed: 2, ..PhantomParams::default() };
        let cohort = out.join(name).join("cohort");
        let manifest = gen_cohort(10, 10, 4, &params, &cohort)?;
        let ev = evaluate_manifest(&manifest, &cohort, &cfg)?;
        ev.write(&out.join(name).join("report"))?;
        let r = &ev.report;
        println!("{name}: ensemble AUC {:.3}, pAUC {:.3}", r.roc.auc, r.froc.pauc);
        println!("  per-model AUC  {:?}", r.metrics.auc.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>());
        println!("  per-model pAUC {:?}", r.metrics.pauc.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>());
        if let Some(sub) = &r.subgroup {
            let auc = sub.metrics.as_ref().map(|m| m.roc.auc);
            println!(
                "  tumors < {} mm: {} pdac + {} normal cases, ensemble AUC {:?}",
                sub.max_size_mm, sub.pdac_count, sub.normal_count, auc
            );
        }
        reports.push(ev.report);
    }

    for metric in ["auc", "pauc"] {
        let a = reports[0].metrics.get(metric).unwrap();
        let b = reports[1].metrics.get(metric).unwrap();
        let c = compare(metric, a, b, 100_000, 1, 1)?;
        println!("{metric}: sharp vs noisy diff {:+.3}, p {:.5}", c.observed_difference, c.p_adjusted);
    }
    println!("outputs under {}", out.display());
    Ok(())
}
