use serde::Serialize;

use super::bounds::mean_trajectory;
use crate::algorithms::ScheduleParams;
use crate::error::{Error, Result};
use crate::protocol::RunLog;

/// Result of comparing logged quantities with a lemma's bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub checked_steps: usize,
    /// Steps where the seed mean exceeded `bound·(1 + tol)`.
    pub violations: Vec<usize>,
    /// Largest `empirical / bound`.
    pub max_ratio: f64,
    /// Sync steps where the logged divergence was not exactly zero.
    pub nonzero_at_sync: Vec<usize>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.nonzero_at_sync.is_empty()
    }
}

fn ratio(emp: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        emp / bound
    } else if emp > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Checks the seed-mean client divergence `Σ p_n‖w_{c,n} − w̄_c‖²` after
/// every logged step `i ≥ 1` against `3EMR²η² + 6E²M²η²δ²` with
/// `η = schedule.rate(i)`, and that it is exactly zero at sync steps.
pub fn check_divergence_lemma(
    runs: &[RunLog],
    r_hat: f64,
    delta_hat: f64,
    e: usize,
    m: usize,
    schedule: &ScheduleParams,
    tol: f64,
) -> Result<LemmaReport> {
    let traj = mean_trajectory(runs, |r| Some(r.client_divergence))?;
    let em = (e * m) as f64;
    let mut report = LemmaReport {
        checked_steps: 0,
        violations: Vec::new(),
        max_ratio: 0.0,
        nonzero_at_sync: Vec::new(),
    };
    for (i, emp) in traj.into_iter().filter(|(i, _)| *i > 0) {
        let eta = schedule.rate(i, e, m);
        let bound = 3.0 * em * r_hat * r_hat * eta * eta
            + 6.0 * em * em * eta * eta * delta_hat * delta_hat;
        if emp > bound * (1.0 + tol) {
            report.violations.push(i);
        }
        report.max_ratio = report.max_ratio.max(ratio(emp, bound));
        report.checked_steps += 1;
    }
    for run in runs {
        for &i in &run.sync_points {
            if let Some(r) = run.record_at(i) {
                if r.client_divergence != 0.0 && !report.nonzero_at_sync.contains(&i) {
                    report.nonzero_at_sync.push(i);
                }
            }
        }
    }
    report.nonzero_at_sync.sort_unstable();
    Ok(report)
}

/// Checks the mean, over all runs and logged steps, of the squared noise
/// of the averaged client gradient against `Σ p_n² σ_n²`. `sigma_sq` holds
/// the per-client variances `σ_n²`.
pub fn check_variance_lemma(
    runs: &[RunLog],
    sigma_sq: &[f64],
    p: &[f64],
    tol: f64,
) -> Result<LemmaReport> {
    if sigma_sq.len() != p.len() {
        return Err(Error::Shape(format!(
            "{} variances for {} weights",
            sigma_sq.len(),
            p.len()
        )));
    }
    let bound: f64 = p.iter().zip(sigma_sq).map(|(p, s)| p * p * s).sum();
    let mut sum = 0.0;
    let mut count = 0usize;
    for run in runs {
        for r in run.records.iter().filter(|r| r.i > 0) {
            sum += r.grad_noise_sq.ok_or_else(|| {
                Error::MissingLog(format!("gradient noise missing at step {}", r.i))
            })?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::MissingLog("no logged steps".into()));
    }
    let mean = sum / count as f64;
    Ok(LemmaReport {
        checked_steps: count,
        violations: if mean > bound * (1.0 + tol) {
            vec![0]
        } else {
            Vec::new()
        },
        max_ratio: ratio(mean, bound),
        nonzero_at_sync: Vec::new(),
    })
}
