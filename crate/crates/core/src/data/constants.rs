use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batching::make_batch_plan;
use super::dataset::Dataset;
use super::partition::Shard;
use crate::error::{Error, Result};
use crate::nn::{full_gradient, ModelParams, SplitSpec};
use crate::seed::{derive, stream};

/// Which parameters the gradient statistics are measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamScope {
    #[default]
    Full,
    ClientSide,
    ServerSide,
}

/// Probe-set maxima of the gradient statistics. These are lower bounds on
/// the true constants, which quantify over every parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsEstimate {
    /// Per client, the root of the largest mean squared deviation of a
    /// mini-batch gradient from the full-shard gradient.
    pub sigma_n: Vec<f64>,
    /// Root of the largest squared mini-batch gradient norm.
    pub r_hat: f64,
    /// Largest `‖∇f_n(w) − ∇F(w)‖`.
    pub delta_hat: f64,
    pub probe_count: usize,
}

fn restrict(grad: &ModelParams, range: &std::ops::Range<usize>) -> Vec<f64> {
    grad.flatten()[range.clone()].to_vec()
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// How [`estimate_constants`] probes the parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub scope: ParamScope,
    /// Mini-batch size of the stochastic gradients.
    pub batch_size: usize,
    pub probes: usize,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            scope: ParamScope::Full,
            batch_size: 32,
            probes: 8,
            seed: 0,
        }
    }
}

/// Estimates σ_n, R and δ at `probes` points: the model itself and
/// `probes − 1` seeded perturbations of it by `U(−1, 1)` per coordinate.
///
/// Mini-batches cover each shard once per probe; when the batch size is at
/// least the shard size the shard itself is the single batch, so the
/// stochastic and full gradients coincide exactly.
pub fn estimate_constants(
    dataset: &Dataset,
    shards: &[Shard],
    model: &ModelParams,
    split: SplitSpec,
    opts: ProbeOptions,
) -> Result<ConstantsEstimate> {
    let ProbeOptions {
        scope,
        batch_size: b,
        probes,
        seed,
    } = opts;
    if probes == 0 || b == 0 || shards.is_empty() {
        return Err(Error::Invalid(
            "need at least one probe, one client and b ≥ 1".into(),
        ));
    }
    if split.total() != model.len() {
        return Err(Error::Spec("split does not match the model".into()));
    }
    let boundary: usize = model.layers()[..split.cut()]
        .iter()
        .map(|l| l.num_params())
        .sum();
    let range = match scope {
        ParamScope::Full => 0..model.num_params(),
        ParamScope::ClientSide => 0..boundary,
        ParamScope::ServerSide => boundary..model.num_params(),
    };
    let weights: Vec<f64> = shards.iter().map(|s| s.weight).collect();

    let mut sigma_sq = vec![0.0f64; shards.len()];
    let mut r_sq: f64 = 0.0;
    let mut delta_sq: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[stream::PROBE]));
    for probe in 0..probes {
        let mut point = model.clone();
        if probe > 0 {
            point
                .values_mut()
                .for_each(|v| *v += rng.random_range(-1.0..1.0));
        }
        let mut full = Vec::with_capacity(shards.len());
        for (n, shard) in shards.iter().enumerate() {
            let (_, g) = full_gradient(&point, &dataset.batch(&shard.indices)?)?;
            let g = restrict(&g, &range);
            let batches = if b >= shard.len() {
                vec![shard.indices.clone()]
            } else {
                let m = shard.len().div_ceil(b);
                make_batch_plan(shard, b, m, derive(seed, &[probe as u64, n as u64]))?.batches
            };
            let mut dev = 0.0;
            for batch in &batches {
                let (_, gz) = full_gradient(&point, &dataset.batch(batch)?)?;
                let gz = restrict(&gz, &range);
                dev += dist_sq(&gz, &g);
                r_sq = r_sq.max(gz.iter().map(|x| x * x).sum());
            }
            sigma_sq[n] = sigma_sq[n].max(dev / batches.len() as f64);
            full.push(g);
        }
        let mut mean = vec![0.0; range.len()];
        for (g, p) in full.iter().zip(&weights) {
            for (m, x) in mean.iter_mut().zip(g) {
                *m += p * x;
            }
        }
        for g in &full {
            delta_sq = delta_sq.max(dist_sq(g, &mean));
        }
    }
    Ok(ConstantsEstimate {
        sigma_n: sigma_sq.iter().map(|s| s.sqrt()).collect(),
        r_hat: r_sq.sqrt(),
        delta_hat: delta_sq.sqrt(),
        probe_count: probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{point_model, sample_quadratic_data, WeightsMode};

    #[test]
    fn full_batches_have_no_variance() {
        let (ds, shards) =
            sample_quadratic_data(&[vec![0.0], vec![1.0]], 6, 1.0, WeightsMode::Uniform, 3)
                .unwrap();
        let model = point_model(&[0.2]).unwrap();
        let est = estimate_constants(
            &ds,
            &shards,
            &model,
            SplitSpec::new(1, 1).unwrap(),
            ProbeOptions {
                scope: ParamScope::Full,
                batch_size: 6,
                probes: 4,
                seed: 9,
            },
        )
        .unwrap();
        assert_eq!(est.sigma_n, vec![0.0, 0.0]);
        assert_eq!(est.probe_count, 4);
    }

    #[test]
    fn single_client_has_no_divergence() {
        let (ds, shards) =
            sample_quadratic_data(&[vec![0.0, 2.0]], 10, 1.0, WeightsMode::Uniform, 3).unwrap();
        let model = point_model(&[0.0, 0.0]).unwrap();
        let est = estimate_constants(
            &ds,
            &shards,
            &model,
            SplitSpec::new(1, 2).unwrap(),
            ProbeOptions {
                scope: ParamScope::Full,
                batch_size: 3,
                probes: 3,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(est.delta_hat, 0.0);
        assert!(est.sigma_n[0] > 0.0);
    }

    #[test]
    fn two_centers_six_apart_diverge_by_three() {
        let (ds, shards) =
            sample_quadratic_data(&[vec![0.0], vec![6.0]], 3, 0.0, WeightsMode::Uniform, 0)
                .unwrap();
        let model = point_model(&[1.0]).unwrap();
        let est = estimate_constants(
            &ds,
            &shards,
            &model,
            SplitSpec::new(0, 1).unwrap(),
            ProbeOptions {
                scope: ParamScope::Full,
                batch_size: 1,
                probes: 5,
                seed: 2,
            },
        )
        .unwrap();
        assert!((est.delta_hat - 3.0).abs() < 1e-12);
    }
}
