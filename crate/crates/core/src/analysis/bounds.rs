use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{RunLog, StepRecord};

/// Constants entering the server-side, client-side and combined bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub r: f64,
    pub mu: f64,
    pub s: f64,
    pub n: usize,
    pub e: usize,
    pub m: usize,
    pub delta: f64,
    /// `Σ p_n² σ_n²`.
    pub sigma_sq_weighted: f64,
    /// `Γ = F(w*) − Σ p_n f_n(w_{c,n}*, w_s)`.
    pub gamma_gap: f64,
    /// Schedule offset γ.
    pub gamma: f64,
    /// `‖w_s⁰ − w_s*‖²`.
    pub d0_server: f64,
    /// `‖w_c⁰ − w_c*‖²`.
    pub d0_client: f64,
    /// Step at which the bounds are evaluated.
    pub i: usize,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("r", self.r),
            ("mu", self.mu),
            ("s", self.s),
            ("delta", self.delta),
            ("sigma_sq_weighted", self.sigma_sq_weighted),
            ("gamma_gap", self.gamma_gap),
            ("d0_server", self.d0_server),
            ("d0_client", self.d0_client),
        ];
        for (name, v) in reals {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "{name} = {v} must be finite and nonnegative"
                )));
            }
        }
        if self.mu <= 0.0 || self.mu > self.s {
            return Err(Error::Invalid(format!(
                "need 0 < mu ≤ S, got mu = {}, S = {}",
                self.mu, self.s
            )));
        }
        if self.n == 0 {
            return Err(Error::Invalid("n must be at least 1".into()));
        }
        let floor = crate::algorithms::gamma(self.s, self.mu, self.e, self.m);
        if self.gamma < floor {
            return Err(Error::Invalid(format!(
                "gamma = {} is below max(8S/mu − 1, EM) = {floor}",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn at(mut self, i: usize) -> Self {
        self.i = i;
        self
    }
}

/// Server-side bound `(8R² + μ²N²(γ+1)d0_s) / (μ²N²(γ+i))`.
pub fn prop1_bound(x: &BoundInputs) -> f64 {
    let mu2n2 = x.mu * x.mu * (x.n * x.n) as f64;
    (8.0 * x.r * x.r + mu2n2 * (x.gamma + 1.0) * x.d0_server) / (mu2n2 * (x.gamma + x.i as f64))
}

/// `H = 6EMR² + 12E²M²δ² + 6SΓ + Σp²σ²`.
pub fn h_constant(x: &BoundInputs) -> f64 {
    let em = (x.e * x.m) as f64;
    6.0 * em * x.r * x.r
        + 12.0 * em * em * x.delta * x.delta
        + 6.0 * x.s * x.gamma_gap
        + x.sigma_sq_weighted
}

/// Client-side bound `(4H + μ²(γ+1)d0_c) / (μ²(γ+i))`.
pub fn prop2_bound(x: &BoundInputs) -> f64 {
    let mu2 = x.mu * x.mu;
    (4.0 * h_constant(x) + mu2 * (x.gamma + 1.0) * x.d0_client) / (mu2 * (x.gamma + x.i as f64))
}

/// `S·(L_s + L_c)/2`.
pub fn combine_bounds(s: f64, server: f64, client: f64) -> f64 {
    s * (server + client) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Server,
    Client,
}

/// Bound values, and optionally an empirical trajectory checked against them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub server_bound: f64,
    pub client_bound: f64,
    pub theorem_bound: f64,
    pub steps: Vec<usize>,
    pub bound_trajectory: Vec<f64>,
    pub empirical_trajectory: Vec<f64>,
    /// Steps where the empirical mean exceeded `bound·(1 + tol)`.
    pub violations: Vec<usize>,
    /// Largest `empirical / bound` over the checked steps.
    pub max_ratio: f64,
}

impl BoundReport {
    pub fn violation_count(&self) -> usize {
        self.violations.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report fields serialize")
    }
}

/// Server, client and combined bounds at `inputs.i`.
pub fn theorem1_bound(inputs: &BoundInputs) -> BoundReport {
    let server_bound = prop1_bound(inputs);
    let client_bound = prop2_bound(inputs);
    BoundReport {
        server_bound,
        client_bound,
        theorem_bound: combine_bounds(inputs.s, server_bound, client_bound),
        steps: Vec::new(),
        bound_trajectory: Vec::new(),
        empirical_trajectory: Vec::new(),
        violations: Vec::new(),
        max_ratio: 0.0,
    }
}

/// Mean over runs of `field` at every logged step. All runs must log the
/// same steps.
pub fn mean_trajectory<F>(runs: &[RunLog], field: F) -> Result<Vec<(usize, f64)>>
where
    F: Fn(&StepRecord) -> Option<f64>,
{
    let first = runs
        .first()
        .ok_or_else(|| Error::MissingLog("no runs".into()))?;
    let mut out = Vec::with_capacity(first.records.len());
    for (k, rec) in first.records.iter().enumerate() {
        let mut sum = 0.0;
        for run in runs {
            let r = run.records.get(k).filter(|r| r.i == rec.i).ok_or_else(|| {
                Error::MissingLog(format!("runs disagree on logged steps at {}", rec.i))
            })?;
            sum += field(r)
                .ok_or_else(|| Error::MissingLog(format!("value missing at step {}", rec.i)))?;
        }
        out.push((rec.i, sum / runs.len() as f64));
    }
    Ok(out)
}

/// Compares the seed-mean squared distance to the optimum on one side of
/// the cut against the matching bound at every logged step.
pub fn check_trajectory_vs_bound(
    runs: &[RunLog],
    inputs: &BoundInputs,
    side: Side,
    tol: f64,
) -> Result<BoundReport> {
    inputs.validate()?;
    let traj = match side {
        Side::Server => mean_trajectory(runs, |r| r.dist_sq_server)?,
        Side::Client => mean_trajectory(runs, |r| r.dist_sq_client)?,
    };
    let mut report = theorem1_bound(inputs);
    for (i, emp) in traj {
        let at = inputs.at(i);
        let bound = match side {
            Side::Server => prop1_bound(&at),
            Side::Client => prop2_bound(&at),
        };
        if emp > bound * (1.0 + tol) {
            report.violations.push(i);
        }
        if bound > 0.0 {
            report.max_ratio = report.max_ratio.max(emp / bound);
        } else if emp > 0.0 {
            report.max_ratio = f64::INFINITY;
        }
        report.steps.push(i);
        report.bound_trajectory.push(bound);
        report.empirical_trajectory.push(emp);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> BoundInputs {
        BoundInputs {
            r: 1.0,
            mu: 1.0,
            s: 1.0,
            n: 1,
            e: 5,
            m: 10,
            delta: 0.0,
            sigma_sq_weighted: 0.0,
            gamma_gap: 0.0,
            gamma: 50.0,
            d0_server: 1.0,
            d0_client: 0.0,
            i: 50,
        }
    }

    #[test]
    fn server_bound_example() {
        assert!((prop1_bound(&base()) - 0.59).abs() < 1e-15);
        let zero = BoundInputs {
            r: 0.0,
            d0_server: 0.0,
            ..base()
        };
        assert_eq!(prop1_bound(&zero), 0.0);
    }

    #[test]
    fn client_bound_example() {
        assert_eq!(h_constant(&base()), 300.0);
        assert_eq!(prop2_bound(&base()), 12.0);
    }

    #[test]
    fn theorem_example() {
        assert!((combine_bounds(1.0, 0.59, 12.0) - 6.295).abs() < 1e-15);
        let r = theorem1_bound(&base());
        assert_eq!(
            r.theorem_bound,
            combine_bounds(1.0, r.server_bound, r.client_bound)
        );
    }

    #[test]
    fn gamma_below_floor_is_rejected() {
        let x = BoundInputs {
            gamma: 10.0,
            ..base()
        };
        assert!(x.validate().is_err());
        assert!(base().validate().is_ok());
    }

    #[test]
    fn bound_at_start_dominates_initial_distance() {
        let x = BoundInputs {
            r: 0.0,
            gamma: 1e9,
            d0_server: 3.0,
            i: 0,
            ..base()
        };
        assert!(prop1_bound(&x) >= 3.0);
    }
}
