use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::partition::Shard;
use crate::error::{Error, Result};
use crate::seed::derive;

/// The `M` mini-batches one client uses during one epoch, as dataset indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub epoch_seed: u64,
    pub batches: Vec<Vec<usize>>,
}

/// Chunks a seeded permutation of the shard into `m` batches of `b`.
///
/// When the shard holds fewer than `m·b` samples the permutation is
/// redrawn (lap `k` seeded from `(epoch_seed, k)`) and appended until full,
/// so every index occurs `⌊m·b/D⌋` or `⌈m·b/D⌉` times.
pub fn make_batch_plan(shard: &Shard, b: usize, m: usize, epoch_seed: u64) -> Result<BatchPlan> {
    if shard.is_empty() {
        return Err(Error::Invalid(format!(
            "client {} has an empty shard",
            shard.client_id
        )));
    }
    if b == 0 || m == 0 {
        return Err(Error::Invalid(
            "batch size and batch count must be ≥ 1".into(),
        ));
    }
    let need = m * b;
    let mut stream = Vec::with_capacity(need + shard.len());
    let mut lap = 0u64;
    while stream.len() < need {
        let mut perm = shard.indices.clone();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(epoch_seed, &[lap])));
        stream.extend(perm);
        lap += 1;
    }
    stream.truncate(need);
    Ok(BatchPlan {
        epoch_seed,
        batches: stream.chunks(b).map(<[usize]>::to_vec).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shard(n: usize) -> Shard {
        Shard {
            client_id: 0,
            indices: (100..100 + n).collect(),
            weight: 1.0,
        }
    }

    #[test]
    fn exact_partition_of_shard() {
        let plan = make_batch_plan(&shard(64), 32, 2, 9).unwrap();
        assert_eq!(plan.batches.len(), 2);
        let mut all: Vec<usize> = plan.batches.concat();
        all.sort_unstable();
        assert_eq!(all, (100..164).collect::<Vec<_>>());
    }

    #[test]
    fn wraps_when_shard_is_small() {
        let plan = make_batch_plan(&shard(10), 32, 1, 4).unwrap();
        assert_eq!(plan.batches[0].len(), 32);
        for i in 100..110 {
            let c = plan.batches[0].iter().filter(|&&x| x == i).count();
            assert!(c == 3 || c == 4);
        }
    }

    #[test]
    fn plan_is_deterministic() {
        let a = make_batch_plan(&shard(50), 8, 3, 77).unwrap();
        assert_eq!(a, make_batch_plan(&shard(50), 8, 3, 77).unwrap());
        assert_ne!(a, make_batch_plan(&shard(50), 8, 3, 78).unwrap());
    }

    #[test]
    fn empty_shard_is_an_error() {
        assert!(make_batch_plan(&shard(0), 1, 1, 0).is_err());
    }
}
