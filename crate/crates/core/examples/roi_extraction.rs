//! Crop a phantom CT volume to the region of interest given by its
//! quarter-resolution pancreas mask, for a few margins.
//!
//! cargo run --example roi_extraction

use voxdet::metrics::Cohort;
use voxdet::phantom::{gen_named_case, PhantomParams};
use voxdet::pipeline::{extract_roi, PipelineConfig};
use voxdet::voxgrid::codes;

fn main() -> voxdet::Result<()> {
    let params = PhantomParams { seed: 5, ..PhantomParams::default() };
    let case = gen_named_case(&params, "pdac_000", Cohort::Pdac, 0)?;
    let g = *case.image.geometry();
    let tumor = case.gt_labels.mask_of(&[codes::TUMOR]).indices();
    let organ = case.gt_labels.foreground();
    println!(
        "image {:?} @ {:?} mm, coarse mask {:?}, tumor {} voxels",
        g.dims,
        g.spacing,
        case.coarse_mask.geometry().dims,
        tumor.len()
    );

    for margin in [0.0, 10.0, 20.0, 40.0] {
        let cfg = PipelineConfig { margin_mm: margin, ..PipelineConfig::default() };
        let roi = extract_roi(&case.image, &case.coarse_mask, &cfg)?;
        let inside = |i: &usize| roi.bbox.contains(g.coords(*i));
        let kept = tumor.iter().filter(|i| inside(i)).count();
        let covered = organ.indices().iter().filter(|&&i| roi.dilated_mask.data()[i]).count();
        let frac = roi.roi_image.len() as f64 / g.len() as f64;
        println!(
            "margin {margin:>4} mm: box {:?}..={:?}, {:.1}% of the volume, tumor {kept}/{}, organ covered by dilated mask {:.1}%",
            roi.bbox.lo,
            roi.bbox.hi,
            100.0 * frac,
            tumor.len(),
            100.0 * covered as f64 / organ.count() as f64
        );
    }
    Ok(())
}
