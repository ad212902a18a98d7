//! Compare two configurations from the AUCs of ten models each, with a
//! Bonferroni adjustment for three pairwise comparisons.
//!
//! cargo run --example permutation_compare

use voxdet::metrics::{compare, permutation_test, DEFAULT_COMPARISONS, PERMUTATION_ITERATIONS};

fn main() -> voxdet::Result<()> {
    let full_ct = [0.962, 0.971, 0.958, 0.975, 0.966, 0.969, 0.960, 0.973, 0.964, 0.970];
    let roi_only = [0.941, 0.952, 0.938, 0.957, 0.949, 0.944, 0.955, 0.936, 0.947, 0.950];
    let with_mask = [0.965, 0.968, 0.959, 0.972, 0.963, 0.971, 0.961, 0.969, 0.966, 0.967];

    let pairs = [
        ("full CT vs ROI only", &full_ct, &roi_only),
        ("full CT vs with mask", &full_ct, &with_mask),
        ("ROI only vs with mask", &roi_only, &with_mask),
    ];
    for (name, a, b) in pairs {
        let r = compare("auc", a, b, PERMUTATION_ITERATIONS, 7, DEFAULT_COMPARISONS)?;
        println!(
            "{name:<22} diff {:+.4}  p {:.5}  adjusted {:.5}  {}",
            r.observed_difference,
            r.p_raw,
            r.p_adjusted,
            if r.significant { "significant" } else { "not significant" }
        );
    }

    // exchanging the groups flips the sign and keeps p
    let ab = permutation_test(&full_ct, &roi_only, 20_000, 1)?;
    let ba = permutation_test(&roi_only, &full_ct, 20_000, 1)?;
    println!("symmetry: T {:+.4} / {:+.4}, p {} / {}", ab.observed, ba.observed, ab.p_value, ba.p_value);
    Ok(())
}
