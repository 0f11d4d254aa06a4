use std::collections::VecDeque;

use rayon::prelude::*;

use super::indexing::{step_coords, sync_points};
use super::log::{RunLog, StepRecord};
use super::state::SplitState;
use super::step::maybe_sync;
use crate::algorithms::TrainConfig;
use crate::analysis::population_variance_sum;
use crate::data::{make_batch_plan, BatchPlan, Dataset, Shard};
use crate::error::{Error, Result};
use crate::nn::{evaluate, full_gradient, init_model, split_model, Batch, ModelParams, SplitSpec};
use crate::seed::{derive, stream};

/// Where a run is evaluated: the dataset for loss and accuracy, and the
/// optimum when it is known.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation<'a> {
    pub dataset: &'a Dataset,
    pub w_star: Option<&'a ModelParams>,
}

impl<'a> Evaluation<'a> {
    pub fn on(dataset: &'a Dataset) -> Self {
        Self {
            dataset,
            w_star: None,
        }
    }

    pub fn with_optimum(mut self, w_star: &'a ModelParams) -> Self {
        self.w_star = Some(w_star);
        self
    }
}

/// One algorithm's update rule. Steps must leave aggregation to the driver
/// and return each client's client-side gradient.
pub(crate) trait Stepper: Sync {
    fn step(
        &self,
        state: &mut SplitState,
        batches: &[Batch],
        eta_c: f64,
        eta_s: f64,
    ) -> Result<Vec<ModelParams>>;
}

/// Called with the state after every step (after any aggregation).
pub type Observer<'o> = &'o mut dyn FnMut(&SplitState);

/// Seed of client `n`'s batch plan for round `t`, epoch `e`.
pub fn batch_seed(master: u64, client: usize, t: usize, e: usize) -> u64 {
    derive(master, &[stream::BATCH, client as u64, t as u64, e as u64])
}

/// The model a run starts from.
pub fn initial_model(cfg: &TrainConfig) -> Result<ModelParams> {
    match &cfg.init {
        Some(m) => Ok(m.clone()),
        None => init_model(&cfg.layers, derive(cfg.seed, &[stream::INIT])),
    }
}

struct Trackers {
    window: usize,
    recent: Vec<VecDeque<Vec<f64>>>,
    current: Vec<Vec<f64>>,
    all: Option<Vec<Vec<Vec<f64>>>>,
}

impl Trackers {
    fn new(clients: usize, window: usize, keep: bool) -> Self {
        Self {
            window,
            recent: vec![VecDeque::with_capacity(window + 1); clients],
            current: Vec::new(),
            all: keep.then(Vec::new),
        }
    }

    fn push(&mut self, grads: &[ModelParams]) {
        self.current = grads.iter().map(ModelParams::flatten).collect();
        for (q, g) in self.recent.iter_mut().zip(&self.current) {
            q.push_back(g.clone());
            if q.len() > self.window {
                q.pop_front();
            }
        }
        if let Some(all) = &mut self.all {
            all.push(self.current.clone());
        }
    }

    fn at_client_mean(&self, cut: usize) -> Option<f64> {
        if cut == 0 || self.recent.iter().any(|q| q.len() < 2) {
            return None;
        }
        let sum: f64 = self
            .recent
            .iter()
            .map(|q| {
                let rows: Vec<&[f64]> = q.iter().map(Vec::as_slice).collect();
                population_variance_sum(&rows)
            })
            .sum();
        Some(sum / self.recent.len() as f64 / cut as f64)
    }

    fn across_clients(&self, cut: usize) -> Option<f64> {
        if cut == 0 || self.current.is_empty() {
            return None;
        }
        Some(population_variance_sum(&self.current) / cut as f64)
    }
}

fn record(
    state: &SplitState,
    eval: &Evaluation<'_>,
    etas: Option<(f64, f64)>,
    trackers: &Trackers,
    grad_noise_sq: Option<f64>,
) -> Result<StepRecord> {
    let mean_client = state.mean_client()?;
    let global = mean_client.concat(state.server())?;
    let (loss, accuracy) = evaluate(&global, &eval.dataset.all())?;
    let (dist_sq_to_wstar, dist_sq_client, dist_sq_server) = match eval.w_star {
        Some(w_star) => {
            let (c, s) = split_model(w_star, SplitSpec::new(state.cut(), w_star.len())?)?;
            (
                Some(global.dist_sq(w_star)?),
                Some(mean_client.dist_sq(&c)?),
                Some(state.server().dist_sq(&s)?),
            )
        }
        None => (None, None, None),
    };
    let (t, e, m) = state.coords();
    Ok(StepRecord {
        i: state.step(),
        t,
        e,
        m,
        loss,
        accuracy,
        dist_sq_to_wstar,
        eta_c: etas.map(|x| x.0),
        eta_s: etas.map(|x| x.1),
        grad_var_at_client_mean: trackers.at_client_mean(state.cut()),
        grad_var_across_clients: trackers.across_clients(state.cut()),
        dist_sq_server,
        dist_sq_client,
        client_divergence: state.client_divergence()?,
        grad_noise_sq,
    })
}

/// `‖Σ p_n (full-shard − mini-batch client gradient)‖²` at the current state.
fn grad_noise(
    state: &SplitState,
    dataset: &Dataset,
    shards: &[Shard],
    batches: &[Batch],
) -> Result<f64> {
    let diffs: Vec<Vec<f64>> = state
        .clients()
        .par_iter()
        .zip(shards)
        .zip(batches)
        .map(|((client, shard), batch)| {
            let model = client.concat(state.server())?;
            let k = client.num_params();
            let (_, g_full) = full_gradient(&model, &dataset.batch(&shard.indices)?)?;
            let (_, g_batch) = full_gradient(&model, batch)?;
            Ok(g_full.flatten()[..k]
                .iter()
                .zip(&g_batch.flatten()[..k])
                .map(|(a, b)| a - b)
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; diffs.first().map_or(0, Vec::len)];
    for (d, p) in diffs.iter().zip(state.weights()) {
        for (m, x) in mean.iter_mut().zip(d) {
            *m += p * x;
        }
    }
    Ok(mean.iter().map(|x| x * x).sum())
}

/// Runs `T·E·M` steps of `stepper` from a state split at `cut`, with one
/// fresh batch plan per client and epoch.
pub(crate) fn drive(
    cfg: &TrainConfig,
    dataset: &Dataset,
    shards: &[Shard],
    eval: &Evaluation<'_>,
    cut: usize,
    stepper: &dyn Stepper,
    mut observer: Option<Observer<'_>>,
) -> Result<RunLog> {
    cfg.validate()?;
    if shards.is_empty() {
        return Err(Error::Invalid("no shards".into()));
    }
    let e_count = cfg.local_epochs;
    let m_count = cfg.batches_per_epoch;
    let schedule = sync_points(cfg.rounds, e_count, m_count)?;
    let weights: Vec<f64> = shards.iter().map(|s| s.weight).collect();
    let model = initial_model(cfg)?;
    let mut state = SplitState::new(&model, cut, weights, e_count, m_count, cfg.seed)?;
    let mut trackers = Trackers::new(shards.len(), cfg.grad_window(), cfg.log.keep_client_grads);
    let mut records = vec![record(&state, eval, None, &trackers, None)?];
    let mut plans: Vec<BatchPlan> = Vec::new();

    for i in 1..=schedule.total_steps() {
        let (t, e, m) = step_coords(i, e_count, m_count);
        let run_step = |state: &mut SplitState,
                        plans: &mut Vec<BatchPlan>,
                        trackers: &mut Trackers|
         -> Result<Option<StepRecord>> {
            if m == 1 {
                *plans = shards
                    .par_iter()
                    .map(|s| {
                        make_batch_plan(
                            s,
                            cfg.batch_size,
                            m_count,
                            batch_seed(cfg.seed, s.client_id, t, e),
                        )
                    })
                    .collect::<Result<_>>()?;
            }
            let batches: Vec<Batch> = plans
                .iter()
                .map(|p| dataset.batch(&p.batches[m - 1]))
                .collect::<Result<_>>()?;
            let eta = cfg.schedule.rate(i - 1, e_count, m_count);
            let noise = if cfg.log.track_grad_noise {
                Some(grad_noise(state, dataset, shards, &batches)?)
            } else {
                None
            };
            let grads = stepper.step(state, &batches, eta, eta)?;
            if state.step() != i {
                return Err(Error::Invalid("step counter out of sync".into()));
            }
            trackers.push(&grads);
            let synced = maybe_sync(state, &schedule)?;
            if cfg.log.every_step || synced || i == schedule.total_steps() {
                Ok(Some(record(
                    state,
                    eval,
                    Some((eta, eta)),
                    trackers,
                    noise,
                )?))
            } else {
                Ok(None)
            }
        };
        if let Some(r) =
            run_step(&mut state, &mut plans, &mut trackers).map_err(|err| err.at_step(i))?
        {
            records.push(r);
        }
        if let Some(obs) = observer.as_mut() {
            obs(&state);
        }
    }

    Ok(RunLog {
        algorithm: cfg.algorithm,
        cut,
        weights: state.weights().to_vec(),
        sync_points: schedule.points(),
        records,
        client_grads: trackers.all,
        final_model: state.global_model()?,
    })
}
