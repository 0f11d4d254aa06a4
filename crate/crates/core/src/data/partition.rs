use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// How aggregation weights are assigned to shards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsMode {
    Uniform,
    /// `p_n = D_n / Σ D_m`.
    #[default]
    BySize,
}

/// One client's share of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shard {
    pub client_id: usize,
    pub indices: Vec<usize>,
    pub weight: f64,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Aggregation weights of `shards` in client order.
pub fn shard_weights(shards: &[Shard]) -> Vec<f64> {
    shards.iter().map(|s| s.weight).collect()
}

/// Fills in `weight` on every shard according to `mode`.
pub fn assign_weights(shards: &mut [Shard], mode: WeightsMode) {
    let n = shards.len() as f64;
    let total: usize = shards.iter().map(Shard::len).sum();
    for s in shards.iter_mut() {
        s.weight = match mode {
            WeightsMode::Uniform => 1.0 / n,
            WeightsMode::BySize => s.len() as f64 / total as f64,
        };
    }
}

/// Splits `dataset` among `n` clients with label skew `r ∈ [0, 1]`.
///
/// `⌊(1−r)·D⌋` samples, chosen by a seeded shuffle, are dealt round-robin.
/// The rest are sorted stably by (label, index) and cut into `n` contiguous
/// blocks of `⌊rest/n⌋`, the last block taking the remainder; block `k`
/// goes to client `k`. Each shard's indices are returned in ascending order.
/// When `D` is close to `n` some shards can be empty; training rejects them.
pub fn partition_noniid(
    dataset: &Dataset,
    n: usize,
    r: f64,
    mode: WeightsMode,
    seed: u64,
) -> Result<Vec<Shard>> {
    let total = dataset.len();
    if n == 0 || total < n {
        return Err(Error::Invalid(format!(
            "cannot split {total} samples among {n} clients"
        )));
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Invalid(format!("non-IID ratio {r} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // The epsilon keeps products such as 0.1·100 from flooring to 9.
    let uniform = (((1.0 - r) * total as f64) + 1e-9).floor() as usize;
    let uniform = uniform.min(total);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, &idx) in order[..uniform].iter().enumerate() {
        members[k % n].push(idx);
    }

    let mut rest = order[uniform..].to_vec();
    let label = |i: usize| dataset.labels().map_or(0, |l| l[i]);
    rest.sort_by_key(|&i| (label(i), i));
    let block = rest.len() / n;
    for (k, m) in members.iter_mut().enumerate() {
        let start = k * block;
        let end = if k + 1 == n {
            rest.len()
        } else {
            start + block
        };
        m.extend_from_slice(&rest[start..end]);
    }

    let mut shards: Vec<Shard> = members
        .into_iter()
        .enumerate()
        .map(|(client_id, mut indices)| {
            indices.sort_unstable();
            Shard {
                client_id,
                indices,
                weight: 0.0,
            }
        })
        .collect();
    assign_weights(&mut shards, mode);
    Ok(shards)
}

/// Shannon entropy (nats) of the label distribution inside a shard.
pub fn label_entropy(dataset: &Dataset, shard: &Shard) -> Result<f64> {
    let (labels, classes) = match (dataset.labels(), dataset.classes()) {
        (Some(l), Some(c)) => (l, c),
        _ => return Err(Error::Invalid("label entropy needs class labels".into())),
    };
    let mut counts = vec![0usize; classes];
    for &i in &shard.indices {
        counts[labels[i]] += 1;
    }
    let n = shard.len() as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum())
}

/// Mean of [`label_entropy`] over all shards.
pub fn mean_label_entropy(dataset: &Dataset, shards: &[Shard]) -> Result<f64> {
    let mut sum = 0.0;
    for s in shards {
        sum += label_entropy(dataset, s)?;
    }
    Ok(sum / shards.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic_classification;

    #[test]
    fn tiny_datasets_may_leave_clients_empty() {
        let ds = gen_synthetic_classification(2, 2, 4, 0.1, 0).unwrap();
        // 4 samples are dealt round-robin, the other 4 fill blocks of size 0
        // except the last.
        let shards = partition_noniid(&ds, 8, 0.5, WeightsMode::BySize, 1).unwrap();
        assert_eq!(shards.iter().filter(|s| s.is_empty()).count(), 3);
        assert_eq!(shards.iter().map(Shard::len).sum::<usize>(), 8);
        assert!(shards
            .iter()
            .filter(|s| s.is_empty())
            .all(|s| s.weight == 0.0));
    }

    #[test]
    fn iid_split_is_even() {
        let ds = gen_synthetic_classification(2, 10, 10, 0.1, 0).unwrap();
        let shards = partition_noniid(&ds, 10, 0.0, WeightsMode::BySize, 3).unwrap();
        assert!(shards.iter().all(|s| s.len() == 10));
        let mut all: Vec<usize> = shards.iter().flat_map(|s| s.indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(shards.iter().all(|s| (s.weight - 0.1).abs() < 1e-15));
    }

    #[test]
    fn full_skew_spans_at_most_two_labels() {
        let ds = gen_synthetic_classification(2, 10, 13, 0.1, 5).unwrap();
        let labels = ds.labels().unwrap();
        let shards = partition_noniid(&ds, 10, 1.0, WeightsMode::BySize, 8).unwrap();
        for s in &shards {
            let lo = s.indices.iter().map(|&i| labels[i]).min().unwrap();
            let hi = s.indices.iter().map(|&i| labels[i]).max().unwrap();
            assert!(hi - lo <= 1, "client {} spans {lo}..={hi}", s.client_id);
        }
    }

    #[test]
    fn remainder_goes_to_last_block() {
        let ds = gen_synthetic_classification(2, 2, 5, 0.1, 5).unwrap();
        let shards = partition_noniid(&ds, 3, 1.0, WeightsMode::Uniform, 1).unwrap();
        let sizes: Vec<usize> = shards.iter().map(Shard::len).collect();
        assert_eq!(sizes, vec![3, 3, 4]);
        assert!(shards.iter().all(|s| s.weight == 1.0 / 3.0));
    }

    #[test]
    fn partition_is_deterministic() {
        let ds = gen_synthetic_classification(2, 4, 9, 0.1, 5).unwrap();
        let a = partition_noniid(&ds, 5, 0.6, WeightsMode::BySize, 2).unwrap();
        let b = partition_noniid(&ds, 5, 0.6, WeightsMode::BySize, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn entropy_of_single_label_shard_is_zero() {
        let ds = gen_synthetic_classification(2, 2, 4, 0.1, 5).unwrap();
        let shard = Shard {
            client_id: 0,
            indices: vec![0, 1, 2],
            weight: 1.0,
        };
        assert_eq!(label_entropy(&ds, &shard).unwrap(), 0.0);
        let mixed = Shard {
            client_id: 0,
            indices: vec![0, 4],
            weight: 1.0,
        };
        assert!((label_entropy(&ds, &mixed).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
