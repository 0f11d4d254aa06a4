use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Algorithm, TrainConfig};
use crate::data::{Dataset, Shard};
use crate::error::{Error, Result};
use crate::nn::{
    backward_client, backward_server, forward_client, forward_server, full_gradient, sgd_step,
    weighted_average, Batch, ModelParams,
};
use crate::protocol::{
    drive, minibatch_sfl_step, Evaluation, Observer, RunLog, SplitState, Stepper,
};
use crate::seed::{derive, stream};

struct MinibatchSfl;

impl Stepper for MinibatchSfl {
    fn step(
        &self,
        s: &mut SplitState,
        b: &[Batch],
        eta_c: f64,
        eta_s: f64,
    ) -> Result<Vec<ModelParams>> {
        minibatch_sfl_step(s, b, eta_c, eta_s)
    }
}

/// Local SGD on whole models; the clients hold every layer.
struct LocalSgd;

impl Stepper for LocalSgd {
    fn step(
        &self,
        s: &mut SplitState,
        b: &[Batch],
        eta_c: f64,
        _eta_s: f64,
    ) -> Result<Vec<ModelParams>> {
        let updated: Vec<(ModelParams, ModelParams)> = s
            .clients
            .par_iter()
            .zip(b)
            .map(|(model, batch)| {
                let (_, g) = full_gradient(model, batch)?;
                Ok((sgd_step(model, &g, eta_c)?, g))
            })
            .collect::<Result<_>>()?;
        let (clients, grads) = updated.into_iter().unzip();
        s.clients = clients;
        s.advance();
        Ok(grads)
    }
}

/// Server-side sequential updates, one per client.
struct SflV2 {
    shuffle: bool,
}

impl Stepper for SflV2 {
    fn step(
        &self,
        s: &mut SplitState,
        b: &[Batch],
        eta_c: f64,
        eta_s: f64,
    ) -> Result<Vec<ModelParams>> {
        if b.len() != s.num_clients() {
            return Err(Error::Shape(format!(
                "{} batches for {} clients",
                b.len(),
                s.num_clients()
            )));
        }
        let forward: Vec<_> = s
            .clients
            .par_iter()
            .zip(b)
            .enumerate()
            .map(|(n, (client, batch))| forward_client(client, batch, n))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..s.num_clients()).collect();
        if self.shuffle {
            let seed = derive(s.seed(), &[stream::SERVER_ORDER, s.step() as u64 + 1]);
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        let mut smashed_grads = vec![None; s.num_clients()];
        for n in order {
            let (_, cache) = forward_server(&s.server, &forward[n].0)?;
            let (g, dz) = backward_server(&s.server, &cache)?;
            s.server = sgd_step(&s.server, &g, eta_s)?;
            smashed_grads[n] = Some(dz);
        }
        let updated: Vec<(ModelParams, ModelParams)> = s
            .clients
            .par_iter()
            .zip(&forward)
            .zip(&smashed_grads)
            .map(|((client, (_, cache)), dz)| {
                let dz = dz.as_ref().expect("every client is visited");
                let g = backward_client(client, cache, dz)?;
                Ok((sgd_step(client, &g, eta_c)?, g))
            })
            .collect::<Result<_>>()?;
        let (clients, grads) = updated.into_iter().unzip();
        s.clients = clients;
        s.advance();
        Ok(grads)
    }
}

/// One step on the whole model with the `p`-weighted mean of every
/// client's mini-batch gradient.
struct GiantBatch;

impl Stepper for GiantBatch {
    fn step(
        &self,
        s: &mut SplitState,
        b: &[Batch],
        _eta_c: f64,
        eta_s: f64,
    ) -> Result<Vec<ModelParams>> {
        let model = &s.server;
        let grads: Vec<ModelParams> = b
            .par_iter()
            .map(|batch| Ok(full_gradient(model, batch)?.1))
            .collect::<Result<_>>()?;
        let g = weighted_average(&grads, &s.weights)?;
        s.server = sgd_step(&s.server, &g, eta_s)?;
        s.advance();
        // Clients hold no layers, so their client-side gradients are empty.
        Ok(vec![ModelParams::empty(); b.len()])
    }
}

/// Plain SGD on a single pooled shard.
struct PlainSgd;

impl Stepper for PlainSgd {
    fn step(
        &self,
        s: &mut SplitState,
        b: &[Batch],
        eta_c: f64,
        _eta_s: f64,
    ) -> Result<Vec<ModelParams>> {
        let [batch] = b else {
            return Err(Error::Shape("centralized training takes one batch".into()));
        };
        let (_, g) = full_gradient(&s.clients[0], batch)?;
        s.clients[0] = sgd_step(&s.clients[0], &g, eta_c)?;
        s.advance();
        Ok(vec![g])
    }
}

fn check_clients(cfg: &TrainConfig, shards: &[Shard]) -> Result<()> {
    if cfg.clients != shards.len() {
        return Err(Error::Invalid(format!(
            "config has {} clients but {} shards were given",
            cfg.clients,
            shards.len()
        )));
    }
    Ok(())
}

fn with_algorithm(cfg: &TrainConfig, algorithm: Algorithm) -> TrainConfig {
    let mut c = cfg.clone();
    c.algorithm = algorithm;
    c
}

/// The split protocol with averaged server updates, cut at `cfg.cut`.
pub fn run_minibatch_sfl(
    cfg: &TrainConfig,
    dataset: &Dataset,
    shards: &[Shard],
    eval: &Evaluation<'_>,
    observer: Option<Observer<'_>>,
) -> Result<RunLog> {
    check_clients(cfg, shards)?;
    let cfg = with_algorithm(cfg, Algorithm::MinibatchSfl);
    drive(
        &cfg,
        dataset,
        shards,
        eval,
        cfg.cut,
        &MinibatchSfl,
        observer,
    )
}

/// Federated averaging of whole models; clients hold all layers.
pub fn run_fedavg(
    cfg: &TrainConfig,
    dataset: &Dataset,
    shards: &[Shard],
    eval: &Evaluation<'_>,
    observer: Option<Observer<'_>>,
) -> Result<RunLog> {
    check_clients(cfg, shards)?;
    let cfg = with_algorithm(cfg, Algorithm::Fedavg);
    drive(
        &cfg,
        dataset,
        shards,
        eval,
        cfg.layers.len(),
        &LocalSgd,
        observer,
    )
}

/// Split learning with one server update per client, in ascending client
/// order unless `cfg.sfl_v2_shuffle` is set.
pub fn run_sfl_v2(
    cfg: &TrainConfig,
    dataset: &Dataset,
    shards: &[Shard],
    eval: &Evaluation<'_>,
    observer: Option<Observer<'_>>,
) -> Result<RunLog> {
    check_clients(cfg, shards)?;
    let cfg = with_algorithm(cfg, Algorithm::SflV2);
    let stepper = SflV2 {
        shuffle: cfg.sfl_v2_shuffle,
    };
    drive(&cfg, dataset, shards, eval, cfg.cut, &stepper, observer)
}

/// Plain SGD over every sample of `dataset`, batches drawn as for a single
/// client holding all of it.
pub fn run_centralized(
    cfg: &TrainConfig,
    dataset: &Dataset,
    eval: &Evaluation<'_>,
    observer: Option<Observer<'_>>,
) -> Result<RunLog> {
    let pooled = [Shard {
        client_id: 0,
        indices: (0..dataset.len()).collect(),
        weight: 1.0,
    }];
    let mut cfg = with_algorithm(cfg, Algorithm::Centralized);
    cfg.clients = 1;
    drive(
        &cfg,
        dataset,
        &pooled,
        eval,
        cfg.layers.len(),
        &PlainSgd,
        observer,
    )
}

/// One whole-model step per iteration on the weighted mean of all clients'
/// mini-batch gradients.
pub fn run_minibatch_sgd(
    cfg: &TrainConfig,
    dataset: &Dataset,
    shards: &[Shard],
    eval: &Evaluation<'_>,
    observer: Option<Observer<'_>>,
) -> Result<RunLog> {
    check_clients(cfg, shards)?;
    let cfg = with_algorithm(cfg, Algorithm::MinibatchSgd);
    drive(&cfg, dataset, shards, eval, 0, &GiantBatch, observer)
}

/// Dispatches on `cfg.algorithm`. Centralized training pools the samples
/// of all shards.
pub fn run(
    cfg: &TrainConfig,
    dataset: &Dataset,
    shards: &[Shard],
    eval: &Evaluation<'_>,
) -> Result<RunLog> {
    match cfg.algorithm {
        Algorithm::MinibatchSfl => run_minibatch_sfl(cfg, dataset, shards, eval, None),
        Algorithm::Fedavg => run_fedavg(cfg, dataset, shards, eval, None),
        Algorithm::SflV2 => run_sfl_v2(cfg, dataset, shards, eval, None),
        Algorithm::MinibatchSgd => run_minibatch_sgd(cfg, dataset, shards, eval, None),
        Algorithm::Centralized => {
            let mut indices: Vec<usize> = shards
                .iter()
                .flat_map(|s| s.indices.iter().copied())
                .collect();
            indices.sort_unstable();
            if indices.len() == dataset.len() {
                run_centralized(cfg, dataset, eval, None)
            } else {
                let pooled = dataset.select(&indices)?;
                run_centralized(cfg, &pooled, eval, None)
            }
        }
    }
}
