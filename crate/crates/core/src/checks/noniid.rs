use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{
    estimate_constants, gen_synthetic_classification, mean_label_entropy, partition_noniid,
    ProbeOptions, WeightsMode,
};
use crate::error::Result;
use crate::nn::{init_model, Activation, LayerSpec, SplitSpec};
use crate::seed::{derive, stream};

/// Non-IID ratios of the entropy sweep.
pub const ENTROPY_RATIOS: [f64; 5] = [0.0, 0.5, 0.8, 0.9, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub triples: usize,
    /// `(D, N, r)` triples whose shards are not a disjoint cover.
    pub failures: Vec<(usize, usize, f64)>,
}

/// Partitions `count` random `(D, N, r)` triples and checks that every
/// sample lands in exactly one shard.
pub fn partition_coverage(count: usize, seed: u64) -> Result<CoverageReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for k in 0..count {
        let classes = rng.random_range(2..=10);
        let per_class = rng.random_range(1..=60);
        let total = classes * per_class;
        let n = rng.random_range(1..=total.min(40));
        let r = if k % 10 == 0 {
            (k / 10 % 2) as f64
        } else {
            rng.random_range(0.0..=1.0)
        };
        let ds =
            gen_synthetic_classification(2, classes, per_class, 1.0, derive(seed, &[k as u64]))?;
        let shards =
            partition_noniid(&ds, n, r, WeightsMode::BySize, derive(seed, &[k as u64, 1]))?;
        let mut seen = vec![0u32; total];
        for s in &shards {
            for &i in &s.indices {
                seen[i] += 1;
            }
        }
        let weight_sum: f64 = shards.iter().map(|s| s.weight).sum();
        let ok =
            shards.len() == n && seen.iter().all(|&c| c == 1) && (weight_sum - 1.0).abs() <= 1e-12;
        if !ok {
            failures.push((total, n, r));
        }
    }
    Ok(CoverageReport {
        triples: count,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeterogeneityReport {
    pub ratios: Vec<f64>,
    /// Mean per-client label entropy at each ratio, averaged over seeds.
    pub mean_entropy: Vec<f64>,
    pub entropy_non_increasing: bool,
    /// Mean estimated δ at the first and last ratio.
    pub delta_first: f64,
    pub delta_last: f64,
}

/// Label entropy and gradient divergence of a balanced 10-class set split
/// among 10 clients, averaged over `seeds`.
pub fn heterogeneity(seeds: &[u64]) -> Result<HeterogeneityReport> {
    let (dim, classes, clients) = (20, 10, 10);
    let layers = [LayerSpec::dense(dim, classes, Activation::SoftmaxXentHead)];
    let per_seed: Vec<(Vec<f64>, f64, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let ds = gen_synthetic_classification(
                dim,
                classes,
                100,
                1.0,
                derive(seed, &[stream::DATA]),
            )?;
            let model = init_model(&layers, derive(seed, &[stream::INIT]))?;
            let split = SplitSpec::new(1, 1)?;
            let mut entropy = Vec::new();
            let mut deltas = Vec::new();
            for (k, &r) in ENTROPY_RATIOS.iter().enumerate() {
                let shards = partition_noniid(
                    &ds,
                    clients,
                    r,
                    WeightsMode::BySize,
                    derive(seed, &[stream::PARTITION]),
                )?;
                entropy.push(mean_label_entropy(&ds, &shards)?);
                if k == 0 || k + 1 == ENTROPY_RATIOS.len() {
                    let opts = ProbeOptions {
                        probes: 2,
                        seed,
                        ..ProbeOptions::default()
                    };
                    deltas.push(estimate_constants(&ds, &shards, &model, split, opts)?.delta_hat);
                }
            }
            Ok((entropy, deltas[0], deltas[1]))
        })
        .collect::<Result<_>>()?;
    let count = seeds.len() as f64;
    let mean_entropy: Vec<f64> = (0..ENTROPY_RATIOS.len())
        .map(|k| per_seed.iter().map(|p| p.0[k]).sum::<f64>() / count)
        .collect();
    Ok(HeterogeneityReport {
        ratios: ENTROPY_RATIOS.to_vec(),
        entropy_non_increasing: mean_entropy.windows(2).all(|w| w[1] <= w[0]),
        mean_entropy,
        delta_first: per_seed.iter().map(|p| p.1).sum::<f64>() / count,
        delta_last: per_seed.iter().map(|p| p.2).sum::<f64>() / count,
    })
}
