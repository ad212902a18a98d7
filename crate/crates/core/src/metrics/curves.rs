use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vertically averaged curve with a normal-approximation 95% band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCurve {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Value of a step curve at `x`: the largest `y` among points with abscissa
/// at or below `x`, or 0 left of the first point.
pub fn step_value(points: &[[f64; 2]], x: f64) -> f64 {
    points
        .iter()
        .filter(|p| p[0] <= x)
        .map(|p| p[1])
        .fold(0.0, f64::max)
}

/// Averages `curves` on `grid`; the band is `mean +- 1.96 sd / sqrt(M)`
/// (sample sd) clipped to `[0, 1]`.
pub fn mean_curve_ci(curves: &[Vec<[f64; 2]>], grid: &[f64]) -> Result<MeanCurve> {
    if curves.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "mean curve needs at least 2 curves, got {}",
            curves.len()
        )));
    }
    let m = curves.len() as f64;
    let mut out = MeanCurve {
        grid: grid.to_vec(),
        mean: Vec::with_capacity(grid.len()),
        sd: Vec::with_capacity(grid.len()),
        lower: Vec::with_capacity(grid.len()),
        upper: Vec::with_capacity(grid.len()),
    };
    for &x in grid {
        let ys: Vec<f64> = curves.iter().map(|c| step_value(c, x)).collect();
        let mean = ys.iter().sum::<f64>() / m;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let sd = var.sqrt();
        let half = 1.96 * sd / m.sqrt();
        out.mean.push(mean);
        out.sd.push(sd);
        out.lower.push((mean - half).clamp(0.0, 1.0));
        out.upper.push((mean + half).clamp(0.0, 1.0));
    }
    Ok(out)
}
