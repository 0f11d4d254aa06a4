use crate::algorithms::{
    run_centralized, run_fedavg, run_minibatch_sfl, run_minibatch_sgd, run_sfl_v2, ScheduleParams,
    TrainConfig,
};
use crate::data::{gen_synthetic_classification, partition_noniid, Dataset, Shard, WeightsMode};
use crate::error::Result;
use crate::nn::{Activation, LayerSpec, ModelParams};
use crate::protocol::{Evaluation, RunLog, SplitState};
use crate::seed::{derive, stream};

/// A small non-IID classification problem with a 3-layer network and a
/// run configuration of `T=2, E=2, M=3, N=4`.
pub struct ToySetup {
    pub dataset: Dataset,
    pub shards: Vec<Shard>,
    pub config: TrainConfig,
}

pub fn toy_setup(seed: u64) -> Result<ToySetup> {
    let dataset = gen_synthetic_classification(4, 3, 20, 0.7, derive(seed, &[stream::DATA]))?;
    let shards = partition_noniid(
        &dataset,
        4,
        0.5,
        WeightsMode::BySize,
        derive(seed, &[stream::PARTITION]),
    )?;
    let layers = vec![
        LayerSpec::dense(4, 6, Activation::Tanh),
        LayerSpec::dense(6, 5, Activation::Relu),
        LayerSpec::dense(5, 3, Activation::SoftmaxXentHead),
    ];
    let mut config = TrainConfig::new(layers, 4);
    config.rounds = 2;
    config.local_epochs = 2;
    config.batches_per_epoch = 3;
    config.batch_size = 4;
    config.schedule = ScheduleParams::constant(0.1);
    config.seed = seed;
    Ok(ToySetup {
        dataset,
        shards,
        config,
    })
}

/// Per-step snapshots of `(clients, server)`.
pub type Trajectory = Vec<(Vec<ModelParams>, ModelParams)>;

fn recorder(out: &mut Trajectory) -> impl FnMut(&SplitState) + '_ {
    |s: &SplitState| out.push((s.clients().to_vec(), s.server().clone()))
}

fn max_gap(a: &[ModelParams], b: &[ModelParams]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| super::gradients::max_abs_diff(x, y))
        .fold(0.0, f64::max)
}

/// Largest parameter gap, over all steps and clients, between the split
/// protocol cut at `L` and federated averaging. `lr_scale` multiplies the
/// federated-averaging step size, so any value other than 1 must show up.
pub fn fedavg_equivalence(seed: u64, lr_scale: f64) -> Result<f64> {
    let toy = toy_setup(seed)?;
    let eval = Evaluation::on(&toy.dataset);
    let mut sfl_cfg = toy.config.clone();
    sfl_cfg.cut = sfl_cfg.layers.len();
    let mut a = Trajectory::new();
    run_minibatch_sfl(
        &sfl_cfg,
        &toy.dataset,
        &toy.shards,
        &eval,
        Some(&mut recorder(&mut a)),
    )?;

    let mut fa_cfg = toy.config.clone();
    fa_cfg.schedule.constant_lr *= lr_scale;
    let mut b = Trajectory::new();
    run_fedavg(
        &fa_cfg,
        &toy.dataset,
        &toy.shards,
        &eval,
        Some(&mut recorder(&mut b)),
    )?;

    Ok(a.iter()
        .zip(&b)
        .map(|((ca, _), (cb, _))| max_gap(ca, cb))
        .fold(0.0, f64::max))
}

/// Whether the split protocol cut at 0 and minibatch SGD agree bitwise at
/// every step, and the number of steps compared.
pub fn minibatch_sgd_equivalence(seed: u64) -> Result<(bool, usize)> {
    let toy = toy_setup(seed)?;
    let eval = Evaluation::on(&toy.dataset);
    let mut cfg = toy.config.clone();
    cfg.cut = 0;
    let mut a = Trajectory::new();
    run_minibatch_sfl(
        &cfg,
        &toy.dataset,
        &toy.shards,
        &eval,
        Some(&mut recorder(&mut a)),
    )?;
    let mut b = Trajectory::new();
    run_minibatch_sgd(
        &cfg,
        &toy.dataset,
        &toy.shards,
        &eval,
        Some(&mut recorder(&mut b)),
    )?;
    let same = a.len() == b.len()
        && a.iter().zip(&b).all(|((_, sa), (_, sb))| {
            sa.values()
                .zip(sb.values())
                .all(|(x, y)| x.to_bits() == y.to_bits())
        });
    Ok((same, a.len()))
}

/// Outcome of the sync-equalization check for one cut.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SyncReport {
    pub sync_steps: usize,
    /// Sync steps after which some client differs bitwise from client 0.
    pub unequal_steps: Vec<usize>,
    /// Largest logged divergence at a sync step.
    pub max_divergence_at_sync: f64,
}

pub fn sync_equalization(seed: u64, cut: usize) -> Result<SyncReport> {
    let toy = toy_setup(seed)?;
    let eval = Evaluation::on(&toy.dataset);
    let mut cfg = toy.config.clone();
    cfg.cut = cut;
    cfg.log.every_step = true;
    let mut traj = Trajectory::new();
    let log = run_minibatch_sfl(
        &cfg,
        &toy.dataset,
        &toy.shards,
        &eval,
        Some(&mut recorder(&mut traj)),
    )?;
    Ok(sync_report(&log, &traj))
}

pub(crate) fn sync_report(log: &RunLog, traj: &Trajectory) -> SyncReport {
    let mut unequal_steps = Vec::new();
    let mut max_divergence_at_sync: f64 = 0.0;
    for &i in &log.sync_points {
        let (clients, _) = &traj[i - 1];
        let first = &clients[0];
        let identical = clients.iter().all(|c| {
            c.values()
                .zip(first.values())
                .all(|(x, y)| x.to_bits() == y.to_bits())
        });
        if !identical {
            unequal_steps.push(i);
        }
        if let Some(r) = log.record_at(i) {
            max_divergence_at_sync = max_divergence_at_sync.max(r.client_divergence);
        }
    }
    SyncReport {
        sync_steps: log.sync_points.len(),
        unequal_steps,
        max_divergence_at_sync,
    }
}

/// Whether federated averaging with one client holding every sample and
/// centralized SGD produce bitwise identical trajectories.
pub fn centralized_equivalence(seed: u64) -> Result<bool> {
    let toy = toy_setup(seed)?;
    let eval = Evaluation::on(&toy.dataset);
    let pooled = [Shard {
        client_id: 0,
        indices: (0..toy.dataset.len()).collect(),
        weight: 1.0,
    }];
    let mut cfg = toy.config.clone();
    cfg.clients = 1;
    let mut a = Trajectory::new();
    run_fedavg(
        &cfg,
        &toy.dataset,
        &pooled,
        &eval,
        Some(&mut recorder(&mut a)),
    )?;
    let mut b = Trajectory::new();
    run_centralized(&cfg, &toy.dataset, &eval, Some(&mut recorder(&mut b)))?;
    Ok(a == b)
}

/// Largest gap between SFL-V2 and the split protocol with one client.
pub fn sfl_v2_single_client_gap(seed: u64, cut: usize) -> Result<f64> {
    let toy = toy_setup(seed)?;
    let eval = Evaluation::on(&toy.dataset);
    let shard = [Shard {
        weight: 1.0,
        ..toy.shards[0].clone()
    }];
    let mut cfg = toy.config.clone();
    cfg.clients = 1;
    cfg.cut = cut;
    let mut a = Trajectory::new();
    run_minibatch_sfl(
        &cfg,
        &toy.dataset,
        &shard,
        &eval,
        Some(&mut recorder(&mut a)),
    )?;
    let mut b = Trajectory::new();
    run_sfl_v2(
        &cfg,
        &toy.dataset,
        &shard,
        &eval,
        Some(&mut recorder(&mut b)),
    )?;
    Ok(a.iter()
        .zip(&b)
        .map(|((ca, sa), (cb, sb))| max_gap(ca, cb).max(super::gradients::max_abs_diff(sa, sb)))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fedavg_reduction_and_its_negative_control() {
        assert!(fedavg_equivalence(1, 1.0).unwrap() <= 1e-12);
        assert!(fedavg_equivalence(1, 1.01).unwrap() > 1e-12);
    }

    #[test]
    fn minibatch_sgd_reduction_is_bitwise() {
        let (same, steps) = minibatch_sgd_equivalence(2).unwrap();
        assert!(same);
        assert_eq!(steps, 12);
    }

    #[test]
    fn clients_agree_after_sync() {
        for cut in 0..=3 {
            let r = sync_equalization(3, cut).unwrap();
            assert_eq!(r.sync_steps, 2);
            assert!(r.unequal_steps.is_empty());
            assert_eq!(r.max_divergence_at_sync, 0.0);
        }
    }

    #[test]
    fn centralized_matches_single_client_fedavg() {
        assert!(centralized_equivalence(4).unwrap());
    }

    #[test]
    fn sfl_v2_with_one_client_is_the_split_protocol() {
        for cut in 0..=3 {
            assert!(sfl_v2_single_client_gap(5, cut).unwrap() <= 1e-12);
        }
    }
}
