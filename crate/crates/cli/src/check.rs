use std::time::Instant;

use minibatch_sfl::checks::analytic::{bound_calculators, schedule_condition};
use minibatch_sfl::checks::classification::ClassificationExperiment;
use minibatch_sfl::checks::equivalence::{
    centralized_equivalence, fedavg_equivalence, minibatch_sgd_equivalence,
    sfl_v2_single_client_gap, sync_equalization, toy_setup,
};
use minibatch_sfl::checks::gradients::{gradient_oracle, split_equivalence};
use minibatch_sfl::checks::noniid::{heterogeneity, partition_coverage};
use minibatch_sfl::checks::quadratic::{QuadraticExperiment, QuadraticReport};
use serde::Serialize;
use serde_json::{json, Value};

/// Deliberate faults that a healthy suite must flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Injection {
    /// Perturbs the federated-averaging step size by 1%.
    FedavgLr,
    /// Halves the gradient-norm constant in the bound trajectories.
    HalveR,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub module: &'static str,
    pub tolerance: String,
    pub passed: bool,
    pub detail: Value,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub injected: Vec<Injection>,
    pub checks: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn failed_names(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

/// Name, module and whether the check is part of the default suite.
pub const CHECKS: [(&str, &str, bool); 20] = [
    ("gradient-oracle", "nn", true),
    ("split-equivalence", "nn", true),
    ("fedavg-equivalence", "algorithms", true),
    ("minibatch-sgd-equivalence", "algorithms", true),
    ("centralized-equivalence", "algorithms", true),
    ("sfl-v2-single-client", "algorithms", true),
    ("sync-equalization", "protocol", true),
    ("schedule-condition", "algorithms", true),
    ("bound-calculators", "analysis", true),
    ("prop1-trajectory", "analysis", true),
    ("prop2-trajectory", "analysis", true),
    ("rate-fit", "analysis", true),
    ("variance-lemma", "analysis", true),
    ("divergence-lemma", "analysis", true),
    ("single-client-divergence", "protocol", true),
    ("partition-coverage", "data", true),
    ("label-entropy", "data", true),
    ("delta-heterogeneity", "data", true),
    ("algorithm-comparison", "algorithms", false),
    ("cut-layer-trend", "analysis", false),
];

/// Names of the checks run by default.
pub fn default_checks() -> Vec<&'static str> {
    CHECKS.iter().filter(|c| c.2).map(|c| c.0).collect()
}

/// Rate-fit slope band for the quadratic experiment.
pub const RATE_BAND: (f64, f64) = (-1.4, -0.7);
pub const GRADIENT_TOL: f64 = 1e-6;
pub const EQUIVALENCE_TOL: f64 = 1e-12;

struct Context {
    inject: Vec<Injection>,
    quadratic: Option<Result<QuadraticReport, String>>,
    classification:
        Option<Result<minibatch_sfl::checks::classification::ClassificationReport, String>>,
    heterogeneity: Option<Result<minibatch_sfl::checks::noniid::HeterogeneityReport, String>>,
}

impl Context {
    fn injected(&self, i: Injection) -> bool {
        self.inject.contains(&i)
    }

    fn quadratic(&mut self) -> Result<QuadraticReport, String> {
        let scale = if self.injected(Injection::HalveR) {
            0.5
        } else {
            1.0
        };
        self.quadratic
            .get_or_insert_with(|| {
                QuadraticExperiment::default()
                    .run()
                    .and_then(|runs| runs.report(scale))
                    .map_err(|e| e.to_string())
            })
            .clone()
    }

    fn classification(
        &mut self,
    ) -> Result<minibatch_sfl::checks::classification::ClassificationReport, String> {
        self.classification
            .get_or_insert_with(|| {
                ClassificationExperiment::default()
                    .report()
                    .map_err(|e| e.to_string())
            })
            .clone()
    }

    fn heterogeneity(
        &mut self,
    ) -> Result<minibatch_sfl::checks::noniid::HeterogeneityReport, String> {
        self.heterogeneity
            .get_or_insert_with(|| {
                let seeds: Vec<u64> = (0..10).collect();
                heterogeneity(&seeds).map_err(|e| e.to_string())
            })
            .clone()
    }
}

type Eval = (String, bool, Value);

fn fail(e: impl ToString) -> Eval {
    (String::new(), false, json!({ "error": e.to_string() }))
}

fn evaluate(name: &str, ctx: &mut Context) -> Eval {
    macro_rules! tri {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(e) => return fail(e),
            }
        };
    }
    match name {
        "gradient-oracle" => {
            let worst = tri!(gradient_oracle(50, 0));
            (
                format!("max relative error ≤ {GRADIENT_TOL:e}"),
                worst <= GRADIENT_TOL,
                json!({ "max_relative_error": worst, "models": 50 }),
            )
        }
        "split-equivalence" => {
            let worst = tri!(split_equivalence(0));
            (
                format!("max abs gap ≤ {EQUIVALENCE_TOL:e}"),
                worst <= EQUIVALENCE_TOL,
                json!({ "max_abs_gap": worst }),
            )
        }
        "fedavg-equivalence" => {
            let scale = if ctx.injected(Injection::FedavgLr) {
                1.01
            } else {
                1.0
            };
            let worst = tri!(fedavg_equivalence(0, scale));
            (
                format!("max abs gap ≤ {EQUIVALENCE_TOL:e}"),
                worst <= EQUIVALENCE_TOL,
                json!({ "max_abs_gap": worst, "lr_scale": scale }),
            )
        }
        "minibatch-sgd-equivalence" => {
            let (bitwise, steps) = tri!(minibatch_sgd_equivalence(0));
            (
                "bitwise".into(),
                bitwise,
                json!({ "bitwise": bitwise, "steps": steps }),
            )
        }
        "centralized-equivalence" => {
            let bitwise = tri!(centralized_equivalence(0));
            ("bitwise".into(), bitwise, json!({ "bitwise": bitwise }))
        }
        "sfl-v2-single-client" => {
            let gap = tri!(sfl_v2_single_client_gap(0, 1));
            (
                format!("max abs gap ≤ {EQUIVALENCE_TOL:e}"),
                gap <= EQUIVALENCE_TOL,
                json!({ "max_abs_gap": gap }),
            )
        }
        "sync-equalization" => {
            let layers = tri!(toy_setup(0)).config.layers.len();
            let mut reports = Vec::new();
            for cut in 0..=layers {
                reports.push(tri!(sync_equalization(0, cut)));
            }
            let ok = reports
                .iter()
                .all(|r| r.unequal_steps.is_empty() && r.max_divergence_at_sync == 0.0);
            ("bitwise, divergence exactly 0".into(), ok, json!(reports))
        }
        "schedule-condition" => {
            let r = schedule_condition();
            let ok = r.violations.is_empty() && r.non_decreasing == 0;
            ("lr ≤ 1/(4S), strictly decreasing".into(), ok, json!(r))
        }
        "bound-calculators" => {
            let r = bound_calculators(100, 0);
            let ok = r.examples_exact && r.failures.is_empty();
            (
                "exact examples, monotone on 100 points".into(),
                ok,
                json!(r),
            )
        }
        "prop1-trajectory" | "prop2-trajectory" => {
            let q = tri!(ctx.quadratic());
            let b = if name == "prop1-trajectory" {
                &q.server
            } else {
                &q.client
            };
            let ok = b.violation_count() == 0;
            (
                "seed mean ≤ bound·1.05".into(),
                ok,
                json!({ "violations": b.violation_count(), "max_ratio": b.max_ratio, "r_scale": q.r_scale }),
            )
        }
        "rate-fit" => {
            let q = tri!(ctx.quadratic());
            let ok = (RATE_BAND.0..=RATE_BAND.1).contains(&q.rate.slope);
            (
                format!("slope in [{}, {}]", RATE_BAND.0, RATE_BAND.1),
                ok,
                json!(q.rate),
            )
        }
        "variance-lemma" | "divergence-lemma" => {
            let q = tri!(ctx.quadratic());
            let r = if name == "variance-lemma" {
                &q.variance
            } else {
                &q.divergence
            };
            ("0 violations at tolerance 5%".into(), r.passed(), json!(r))
        }
        "single-client-divergence" => {
            let exp = QuadraticExperiment {
                clients: 1,
                rounds: 5,
                run_seeds: vec![0, 1],
                ..QuadraticExperiment::default()
            };
            let runs = tri!(exp.run());
            let worst = runs
                .runs
                .iter()
                .flat_map(|r| &r.records)
                .map(|r| r.client_divergence)
                .fold(0.0, f64::max);
            (
                "divergence exactly 0".into(),
                worst == 0.0,
                json!({ "max_divergence": worst }),
            )
        }
        "partition-coverage" => {
            let r = tri!(partition_coverage(100, 0));
            ("disjoint cover".into(), r.failures.is_empty(), json!(r))
        }
        "label-entropy" => {
            let h = tri!(ctx.heterogeneity());
            (
                "mean entropy non-increasing in r".into(),
                h.entropy_non_increasing,
                json!(h),
            )
        }
        "delta-heterogeneity" => {
            let h = tri!(ctx.heterogeneity());
            let ok = h.delta_last > h.delta_first;
            (
                "delta at r=0.95 > delta at r=0".into(),
                ok,
                json!({ "delta_r0": h.delta_first, "delta_r095": h.delta_last }),
            )
        }
        "algorithm-comparison" => {
            let c = tri!(ctx.classification());
            let ok = c.wins_vs_sfl_v2 >= 8 && c.wins_vs_fedavg >= 7;
            (
                "≥8/10 vs SFL-V2, ≥7/10 vs FedAvg".into(),
                ok,
                json!({ "wins_vs_sfl_v2": c.wins_vs_sfl_v2, "wins_vs_fedavg": c.wins_vs_fedavg, "seeds": c.seeds }),
            )
        }
        "cut-layer-trend" => {
            let c = tri!(ctx.classification());
            let ok = c.accuracy_monotone >= 7
                && c.var_at_client_monotone >= 7
                && c.var_across_monotone >= 7;
            (
                "each trend in ≥7/10 seeds".into(),
                ok,
                json!({
                    "accuracy_monotone": c.accuracy_monotone,
                    "var_at_client_monotone": c.var_at_client_monotone,
                    "var_across_monotone": c.var_across_monotone,
                    "mean_accuracy": c.mean_accuracy,
                }),
            )
        }
        other => fail(format!("unknown check `{other}`")),
    }
}

/// Runs the named checks in the given order.
pub fn run_checks(names: &[&str], inject: &[Injection]) -> CheckReport {
    let mut ctx = Context {
        inject: inject.to_vec(),
        quadratic: None,
        classification: None,
        heterogeneity: None,
    };
    let checks: Vec<CheckOutcome> = names
        .iter()
        .map(|&name| {
            let module = CHECKS
                .iter()
                .find(|c| c.0 == name)
                .map_or("unknown", |c| c.1);
            let start = Instant::now();
            let (tolerance, passed, detail) = evaluate(name, &mut ctx);
            CheckOutcome {
                name: name.to_string(),
                module,
                tolerance,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect();
    CheckReport {
        passed: checks.iter().all(|c| c.passed),
        injected: inject.to_vec(),
        checks,
    }
}
