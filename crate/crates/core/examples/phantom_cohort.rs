//! Generate a small synthetic cohort on disk and summarize it.
//!
//! cargo run --example phantom_cohort [-- OUT_DIR]

use voxdet::metrics::Cohort;
use voxdet::morphology::{connected_components, Connectivity};
use voxdet::phantom::{gen_cohort, PhantomParams};
use voxdet::voxgrid::{codes, read_labels, read_likelihood};
use voxdet::candidates::lesion_size_axial;

fn main() -> voxdet::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("voxdet-phantom"));
    let params = PhantomParams { seed: 42, ..PhantomParams::default() };
    let manifest = gen_cohort(4, 2, 2, &params, &out)?;
    println!("cohort in {} ({} cases)", out.display(), manifest.cases.len());

    for c in &manifest.cases {
        let labels = read_labels(out.join(&c.gt_labels))?;
        let coarse = read_labels(out.join(&c.coarse_mask))?;
        let tumors = connected_components(&labels.mask_of(&[codes::TUMOR]), Connectivity::TwentySix);
        let size = tumors
            .members()
            .first()
            .map(|t| lesion_size_axial(t, labels.geometry()))
            .transpose()?;
        let peaks: Vec<String> = c
            .likelihoods
            .iter()
            .map(|p| read_likelihood(out.join(p)).map(|m| format!("{:.2}", m.max_value())))
            .collect::<voxdet::Result<_>>()?;
        println!(
            "{:<11} {:<6} pancreas {:>6} voxels, tumor {:>9}, coarse {:?}, model peaks [{}]",
            c.id,
            match c.cohort {
                Cohort::Pdac => "pdac",
                Cohort::Normal => "normal",
            },
            labels.mask_of(&[codes::PANCREAS]).count(),
            size.map_or("-".to_string(), |s| format!("{s:.1} mm")),
            coarse.geometry().dims,
            peaks.join(", ")
        );
    }
    Ok(())
}
