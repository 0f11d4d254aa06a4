use minibatch_sfl::algorithms::Algorithm;
use minibatch_sfl::data::{estimate_constants, ConstantsEstimate, ParamScope, ProbeOptions};
use minibatch_sfl::nn::SplitSpec;
use minibatch_sfl::protocol::initial_model;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::task::{prepare, train_config};

/// Estimated constants of one `(r, L_c, seed)` cell at its initial model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsRow {
    pub r: f64,
    pub cut: usize,
    pub seed: u64,
    pub scope: ParamScope,
    #[serde(flatten)]
    pub estimate: ConstantsEstimate,
}

/// Probes σ_n, R and δ around each cell's initial model.
pub fn estimate_all(
    cfg: &ExperimentConfig,
    scope: ParamScope,
    probes: usize,
) -> Result<Vec<ConstantsRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &r in &cfg.r_values {
        for &seed in &cfg.seeds {
            let data = prepare(cfg, r, seed)?;
            let model = initial_model(&train_config(cfg, &data, Algorithm::MinibatchSfl, 0, seed))?;
            for &cut in &cfg.cuts {
                let opts = ProbeOptions {
                    scope,
                    batch_size: cfg.batch_size,
                    probes,
                    seed,
                };
                let split = SplitSpec::new(cut, model.len())?;
                let estimate = estimate_constants(&data.train, &data.shards, &model, split, opts)?;
                rows.push(ConstantsRow {
                    r,
                    cut,
                    seed,
                    scope,
                    estimate,
                });
            }
        }
    }
    Ok(rows)
}
