//! Log-log slope fitting: the measurable form of the o(delta^k) claims.

use crate::{Error, Result};
use serde::Serialize;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares on (log delta, log value). Values of exactly zero are
/// "below floor" and rejected as degenerate (the caller decides what a
/// zero means); negative values are always an error.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    for &(d, v) in points {
        if d <= 0.0 {
            return Err(Error::DegenerateFit(format!("nonpositive delta {d}")));
        }
        if v < 0.0 {
            return Err(Error::DegenerateFit(format!("negative value {v}")));
        }
        if v == 0.0 {
            return Err(Error::DegenerateFit(
                "value exactly zero (below floor, not fitted)".into(),
            ));
        }
    }
    let xs: Vec<f64> = points.iter().map(|&(d, _)| d.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, v)| v.ln()).collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-14 {
        return Err(Error::DegenerateFit("deltas are not distinct".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let p = intercept + slope * x;
            (y - p) * (y - p)
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok((slope, intercept, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic() {
        let pts = [(0.2, 0.04), (0.1, 0.01), (0.05, 0.0025)];
        let (slope, _, r2) = fit_slope(&pts).unwrap();
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_data_has_zero_slope() {
        let pts = [(0.2, 3.0), (0.1, 3.0), (0.05, 3.0)];
        let (slope, _, _) = fit_slope(&pts).unwrap();
        assert!(slope.abs() < 1e-12);
    }

    #[test]
    fn noisy_linear_within_band() {
        let pts = [(0.2, 0.2 * 1.05), (0.1, 0.1 * 0.95), (0.05, 0.05 * 1.02), (0.025, 0.025 * 0.98)];
        let (slope, _, _) = fit_slope(&pts).unwrap();
        assert!((0.9..=1.1).contains(&slope), "slope {slope}");
    }

    #[test]
    fn zero_and_negative_rejected() {
        assert!(fit_slope(&[(0.2, 0.0), (0.1, 1.0), (0.05, 1.0)]).is_err());
        assert!(fit_slope(&[(0.2, 1.0), (0.1, 1.0)]).is_err());
    }
}
