//! Extract lesion candidates from a likelihood map with three blobs, match
//! them against ground truth and serialize them.
//!
//! cargo run --example candidate_extraction

use voxdet::candidates::{
    candidates_to_json, extract_candidates, lesion_size_axial, match_candidates, DuplicatePolicy,
};
use voxdet::metrics::DICE_MIN;
use voxdet::pipeline::PipelineConfig;
use voxdet::voxgrid::{Geometry, ScalarVolume};

fn main() -> voxdet::Result<()> {
    let g = Geometry::new([40, 40, 12], [1.0, 1.0, 2.5], [0.0; 3])?;
    // (center voxel, peak, sigma in voxels)
    let blobs = [([12.0, 12.0, 6.0], 0.92, 2.5), ([28.0, 26.0, 5.0], 0.55, 1.5), ([30.0, 8.0, 3.0], 0.2, 1.0)];
    let data = (0..g.len())
        .map(|i| {
            let p = g.coords(i);
            blobs
                .iter()
                .map(|(c, a, s)| {
                    let d2: f64 = (0..3).map(|k| (p[k] as f64 - c[k]).powi(2)).sum();
                    a * (-d2 / (2.0 * s * s)).exp()
                })
                .fold(0.0, f64::max) as f32
        })
        .collect();
    let map = ScalarVolume::new(g, data)?;

    let cands = extract_candidates(&map, &PipelineConfig::default());
    for c in &cands {
        println!(
            "rank {} confidence {:.3} voxels {:>4} centroid {:?} axial size {:.1} mm",
            c.rank,
            c.confidence,
            c.voxels.len(),
            c.centroid_mm.map(|v| (v * 10.0).round() / 10.0),
            lesion_size_axial(&c.voxels, &g)?
        );
    }

    // ground truth: a sphere of radius 3 around the first blob only
    let lesion: Vec<usize> = (0..g.len())
        .filter(|&i| {
            let p = g.coords(i);
            let w = g.world(p);
            let c = g.world([12, 12, 6]);
            (0..3).map(|k| (w[k] - c[k]).powi(2)).sum::<f64>() <= 9.0
        })
        .collect();
    let result = match_candidates(&cands, &[lesion], DICE_MIN, DuplicatePolicy::Ignore);
    for m in &result.candidates {
        println!("rank {} -> {:?} (dice {:.2})", m.rank, m.status, m.dice);
    }

    let json = candidates_to_json(&cands)?;
    println!("{} bytes of candidate JSON, first record:", json.len());
    println!("{}", json.lines().take(12).collect::<Vec<_>>().join("\n"));
    Ok(())
}
