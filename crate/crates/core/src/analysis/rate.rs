use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(ln(γ + i), ln d_i)`. A slope near −1 is the
/// `O(1/i)` rate. Needs at least 10 points, all with positive distance.
pub fn rate_fit(points: &[(usize, f64)], gamma: f64) -> Result<RateFit> {
    if points.len() < 10 {
        return Err(Error::MissingLog(format!(
            "rate fit needs at least 10 points, got {}",
            points.len()
        )));
    }
    if let Some((i, d)) = points.iter().find(|(_, d)| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::Invalid(format!(
            "distance {d} at step {i} is not positive"
        )));
    }
    let xs: Vec<f64> = points
        .iter()
        .map(|(i, _)| (gamma + *i as f64).ln())
        .collect();
    let ys: Vec<f64> = points.iter().map(|(_, d)| d.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("all points share one step".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_inverse_trajectory_has_unit_slope() {
        let gamma = 50.0;
        let pts: Vec<(usize, f64)> = (0..40)
            .map(|i| (i * 10, 3.0 / (gamma + (i * 10) as f64)))
            .collect();
        let fit = rate_fit(&pts, gamma).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_trajectory_is_flat() {
        let pts: Vec<(usize, f64)> = (0..20).map(|i| (i, 0.7)).collect();
        assert!(rate_fit(&pts, 10.0).unwrap().slope.abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let zeros: Vec<(usize, f64)> = (0..20).map(|i| (i, 0.0)).collect();
        assert!(rate_fit(&zeros, 10.0).is_err());
        assert!(rate_fit(&[(1, 1.0); 5], 10.0).is_err());
    }
}
