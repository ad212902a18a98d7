//! Write a likelihood map and a label volume as NRRD, read them back, and
//! resample the labels to a quarter-resolution grid.
//!
//! cargo run --example nrrd_io [-- OUT_DIR]

use voxdet::voxgrid::{
    codes, read_labels, read_likelihood, resample_inplane, write_nrrd, Geometry, Interpolation,
    LabelVolume, ScalarVolume,
};

fn main() -> voxdet::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("voxdet-nrrd-io"));
    std::fs::create_dir_all(&out)?;

    let g = Geometry::new([32, 32, 8], [0.75, 0.75, 2.5], [-12.0, -12.0, 0.0])?;
    let center = [16.0, 16.0, 4.0];
    let mut lik = Vec::with_capacity(g.len());
    let mut labels = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let p = g.coords(i);
        let d2: f64 = (0..3).map(|a| (p[a] as f64 - center[a]).powi(2)).sum();
        lik.push((-d2 / 18.0).exp() as f32);
        labels.push(match d2 {
            d if d <= 4.0 => codes::TUMOR,
            d if d <= 64.0 => codes::PANCREAS,
            _ => codes::BACKGROUND,
        });
    }
    let lik = ScalarVolume::new(g, lik)?;
    let labels = LabelVolume::new(g, labels)?;

    let (lik_path, lab_path) = (out.join("likelihood.nrrd"), out.join("labels.nrrd"));
    write_nrrd(&lik, &lik_path)?;
    write_nrrd(&labels, &lab_path)?;

    let header: String = std::fs::read(&lik_path)?
        .split(|&b| b == b'\n')
        .take_while(|l| !l.is_empty())
        .map(|l| format!("  {}\n", String::from_utf8_lossy(l)))
        .collect();
    println!("{}:\n{header}", lik_path.display());

    let lik_back = read_likelihood(&lik_path)?;
    let lab_back = read_labels(&lab_path)?;
    assert_eq!(lik_back, lik);
    assert_eq!(lab_back, labels);
    println!("round trip is bit-exact ({} voxels each)", g.len());

    let coarse = resample_inplane(&labels, 8, 8, Interpolation::Nearest)?;
    let cg = coarse.geometry();
    println!(
        "coarse labels: dims {:?}, spacing {:?}, origin {:?}, {} foreground voxels",
        cg.dims,
        cg.spacing,
        cg.origin,
        coarse.foreground().count()
    );
    for axis in 0..3 {
        println!("  axis {axis}: extent {:?} vs {:?}", g.extent(axis), cg.extent(axis));
    }
    Ok(())
}
