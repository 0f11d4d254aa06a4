use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algorithms::{gamma, lr_at};
use crate::analysis::{h_constant, prop1_bound, prop2_bound, theorem1_bound, BoundInputs};

/// Smoothness constants and epoch lengths covered by [`schedule_condition`].
pub const SCHEDULE_S: [f64; 3] = [1.0, 10.0, 100.0];
pub const SCHEDULE_EM: [usize; 3] = [1, 50, 500];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    pub cases: usize,
    pub checked_steps: usize,
    /// `(S, E·M, i)` where `lr_at(i) > 1/(4S)`.
    pub violations: Vec<(f64, usize, usize)>,
    /// Largest `lr_at(i)·4S` seen.
    pub max_ratio: f64,
    /// Cases where the rate failed to decrease strictly between steps.
    pub non_decreasing: usize,
}

/// Checks `lr_at(i) ≤ 1/(4S)` for every `1 ≤ i ≤ 10γ` with `μ = 1`.
pub fn schedule_condition() -> ScheduleReport {
    let mu = 1.0;
    let mut report = ScheduleReport {
        cases: 0,
        checked_steps: 0,
        violations: Vec::new(),
        max_ratio: 0.0,
        non_decreasing: 0,
    };
    for s in SCHEDULE_S {
        for em in SCHEDULE_EM {
            report.cases += 1;
            let g = gamma(s, mu, em, 1);
            let cap = 1.0 / (4.0 * s);
            let last = (10.0 * g).floor() as usize;
            let mut prev = f64::INFINITY;
            let mut monotone = true;
            for i in 1..=last {
                let lr = lr_at(i, mu, g);
                report.checked_steps += 1;
                report.max_ratio = report.max_ratio.max(lr / cap);
                if lr > cap {
                    report.violations.push((s, em, i));
                }
                monotone &= lr < prev;
                prev = lr;
            }
            if !monotone {
                report.non_decreasing += 1;
            }
        }
    }
    report
}

/// The worked bound example: server 0.59, `H = 300`, client 12, combined 6.295.
pub fn worked_example() -> BoundInputs {
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

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheckReport {
    pub server: f64,
    pub h: f64,
    pub client: f64,
    pub theorem: f64,
    pub examples_exact: bool,
    pub grid_points: usize,
    /// Grid points failing any monotonicity property.
    pub failures: Vec<BoundInputs>,
}

fn random_inputs(rng: &mut ChaCha8Rng) -> BoundInputs {
    let mu = rng.random_range(0.1..2.0);
    let s = mu * rng.random_range(1.0..20.0);
    let e = rng.random_range(1..10);
    let m = rng.random_range(1..20);
    BoundInputs {
        r: rng.random_range(0.0..5.0),
        mu,
        s,
        n: rng.random_range(1..50),
        e,
        m,
        delta: rng.random_range(0.0..3.0),
        sigma_sq_weighted: rng.random_range(0.0..2.0),
        gamma_gap: rng.random_range(0.0..2.0),
        gamma: gamma(s, mu, e, m) + rng.random_range(0.0..100.0),
        d0_server: rng.random_range(0.0..10.0),
        d0_client: rng.random_range(0.0..10.0),
        i: rng.random_range(0..10_000),
    }
}

fn monotone_at(x: &BoundInputs) -> bool {
    let later = x.at(x.i + 1 + x.i / 2);
    let mut far = *x;
    far.d0_server += 1.0;
    far.d0_client += 1.0;
    let mut spread = *x;
    spread.delta += 0.5;
    prop1_bound(&later) < prop1_bound(x)
        && prop2_bound(&later) < prop2_bound(x)
        && prop1_bound(&far) > prop1_bound(x)
        && prop2_bound(&far) > prop2_bound(x)
        && prop2_bound(&spread) > prop2_bound(x)
        && prop1_bound(&spread) == prop1_bound(x)
}

/// Evaluates the worked example and the monotonicity properties on `points`
/// seeded random inputs.
pub fn bound_calculators(points: usize, seed: u64) -> BoundCheckReport {
    let x = worked_example();
    let t = theorem1_bound(&x);
    let h = h_constant(&x);
    let examples_exact =
        t.server_bound == 0.59 && h == 300.0 && t.client_bound == 12.0 && t.theorem_bound == 6.295;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let failures = (0..points)
        .map(|_| random_inputs(&mut rng))
        .filter(|p| !monotone_at(p))
        .collect();
    BoundCheckReport {
        server: t.server_bound,
        h,
        client: t.client_bound,
        theorem: t.theorem_bound,
        examples_exact,
        grid_points: points,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_inputs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            random_inputs(&mut rng).validate().unwrap();
        }
    }

    #[test]
    fn boundary_case_meets_cap_with_equality() {
        // S = 100, E·M = 1 gives γ = 799, so lr_at(1) = 2/800 = 1/400.
        let g = gamma(100.0, 1.0, 1, 1);
        assert_eq!(g, 799.0);
        assert_eq!(lr_at(1, 1.0, g), 1.0 / 400.0);
        assert!(lr_at(0, 1.0, g) > 1.0 / 400.0);
    }

    #[test]
    fn schedule_report_covers_all_cases() {
        let r = schedule_condition();
        assert_eq!(r.cases, 9);
        assert!(r.violations.is_empty());
        assert_eq!(r.non_decreasing, 0);
        assert_eq!(r.max_ratio, 1.0);
    }

    #[test]
    fn worked_example_is_exact() {
        let r = bound_calculators(10, 0);
        assert!(r.examples_exact, "{r:?}");
        assert!(r.failures.is_empty());
    }
}
