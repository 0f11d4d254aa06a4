use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::algorithms::{gamma, run_minibatch_sfl, ScheduleParams, TrainConfig};
use crate::analysis::{
    check_divergence_lemma, check_trajectory_vs_bound, check_variance_lemma, mean_trajectory,
    rate_fit, BoundInputs, BoundReport, LemmaReport, RateFit, Side,
};
use crate::data::{
    point_model, quadratic_constants, sample_quadratic_data, task_from_data, Dataset,
    QuadraticConstants, QuadraticTask, Shard, WeightsMode,
};
use crate::error::{Error, Result};
use crate::protocol::{Evaluation, RunLog};
use crate::seed::{derive, stream};

/// Split training on a sampled quadratic task with the diminishing
/// schedule, repeated over several run seeds on one fixed dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticExperiment {
    pub clients: usize,
    pub dim: usize,
    pub cut: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub per_client: usize,
    /// Std of the samples around their client's center.
    pub noise: f64,
    /// Std of the client centers around the origin.
    pub center_spread: f64,
    pub data_seed: u64,
    pub run_seeds: Vec<u64>,
    /// Relative slack on every bound comparison.
    pub tol: f64,
}

impl Default for QuadraticExperiment {
    fn default() -> Self {
        Self {
            clients: 4,
            dim: 2,
            cut: 1,
            rounds: 50,
            local_epochs: 5,
            batches_per_epoch: 2,
            batch_size: 1,
            per_client: 200,
            noise: 1.0,
            center_spread: 0.1,
            data_seed: 9,
            run_seeds: (0..10).collect(),
            tol: 0.05,
        }
    }
}

/// Data, exact constants and every run of a [`QuadraticExperiment`].
#[derive(Debug, Clone)]
pub struct QuadraticRuns {
    pub experiment: QuadraticExperiment,
    pub dataset: Dataset,
    pub shards: Vec<Shard>,
    pub task: QuadraticTask,
    pub constants: QuadraticConstants,
    pub gamma: f64,
    pub runs: Vec<RunLog>,
}

/// Bound, lemma and rate checks on a set of quadratic runs.
#[derive(Debug, Clone, Serialize)]
pub struct QuadraticReport {
    pub r_scale: f64,
    pub server: BoundReport,
    pub client: BoundReport,
    pub divergence: LemmaReport,
    pub variance: LemmaReport,
    pub rate: RateFit,
}

impl QuadraticExperiment {
    pub fn config(&self, seed: u64, w0: &[f64]) -> Result<TrainConfig> {
        let init = point_model(w0)?;
        let mut cfg = TrainConfig::new(init.specs(), self.clients);
        cfg.cut = self.cut;
        cfg.rounds = self.rounds;
        cfg.local_epochs = self.local_epochs;
        cfg.batches_per_epoch = self.batches_per_epoch;
        cfg.batch_size = self.batch_size;
        cfg.schedule = ScheduleParams::diminishing(1.0, 1.0);
        cfg.seed = seed;
        cfg.log.every_step = true;
        cfg.log.track_grad_noise = true;
        cfg.init = Some(init);
        Ok(cfg)
    }

    /// Seeded client centers, the sampled points around them and the task
    /// their shard means define.
    pub fn sample(&self) -> Result<(Dataset, Vec<Shard>, QuadraticTask)> {
        let normal =
            Normal::new(0.0, self.center_spread).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive(self.data_seed, &[stream::DATA]));
        let centers: Vec<Vec<f64>> = (0..self.clients)
            .map(|_| (0..self.dim).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let (dataset, shards) = sample_quadratic_data(
            &centers,
            self.per_client,
            self.noise,
            WeightsMode::Uniform,
            derive(self.data_seed, &[stream::PARTITION]),
        )?;
        let task = task_from_data(&dataset, &shards)?;
        Ok((dataset, shards, task))
    }

    /// Samples the data, derives the exact constants and trains once per
    /// run seed, starting from the origin.
    pub fn run(&self) -> Result<QuadraticRuns> {
        if self.cut > self.dim {
            return Err(Error::Invalid(format!(
                "cut {} exceeds dimension {}",
                self.cut, self.dim
            )));
        }
        let (dataset, shards, task) = self.sample()?;
        let w0 = vec![0.0; self.dim];
        let constants = quadratic_constants(
            &task,
            &dataset,
            &shards,
            self.batch_size,
            self.batches_per_epoch,
            self.cut,
            &w0,
        )?;
        let w_star = point_model(task.w_star())?;
        let eval = Evaluation::on(&dataset).with_optimum(&w_star);
        let runs = self
            .run_seeds
            .par_iter()
            .map(|&seed| {
                let cfg = self.config(seed, &w0)?;
                run_minibatch_sfl(&cfg, &dataset, &shards, &eval, None)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QuadraticRuns {
            experiment: self.clone(),
            gamma: gamma(1.0, 1.0, self.local_epochs, self.batches_per_epoch),
            dataset,
            shards,
            task,
            constants,
            runs,
        })
    }
}

impl QuadraticRuns {
    /// Bound inputs for one side, with `R` multiplied by `r_scale`.
    pub fn bound_inputs(&self, side: Side, r_scale: f64) -> BoundInputs {
        let k = &self.constants;
        let x = &self.experiment;
        let r_sq = match side {
            Side::Server => k.r_sq_server,
            Side::Client => k.r_sq_client,
        };
        BoundInputs {
            r: r_sq.sqrt() * r_scale,
            mu: 1.0,
            s: 1.0,
            n: x.clients,
            e: x.local_epochs,
            m: x.batches_per_epoch,
            delta: k.delta_sq.sqrt(),
            sigma_sq_weighted: k.sigma_sq_weighted,
            gamma_gap: k.gamma_gap,
            gamma: self.gamma,
            d0_server: k.d0_server,
            d0_client: k.d0_client,
            i: 0,
        }
    }

    pub fn report(&self, r_scale: f64) -> Result<QuadraticReport> {
        let x = &self.experiment;
        let server = check_trajectory_vs_bound(
            &self.runs,
            &self.bound_inputs(Side::Server, r_scale),
            Side::Server,
            x.tol,
        )?;
        let client = check_trajectory_vs_bound(
            &self.runs,
            &self.bound_inputs(Side::Client, r_scale),
            Side::Client,
            x.tol,
        )?;
        let divergence = check_divergence_lemma(
            &self.runs,
            self.constants.r_sq_client.sqrt() * r_scale,
            self.constants.delta_sq.sqrt(),
            x.local_epochs,
            x.batches_per_epoch,
            &ScheduleParams::diminishing(1.0, 1.0),
            x.tol,
        )?;
        let weights: Vec<f64> = self.shards.iter().map(|s| s.weight).collect();
        let variance =
            check_variance_lemma(&self.runs, &self.constants.sigma_sq_client, &weights, x.tol)?;
        let points: Vec<(usize, f64)> = mean_trajectory(&self.runs, |r| r.dist_sq_to_wstar)?
            .into_iter()
            .filter(|(i, _)| *i > 0)
            .collect();
        let rate = rate_fit(&points, self.gamma)?;
        Ok(QuadraticReport {
            r_scale,
            server,
            client,
            divergence,
            variance,
            rate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_experiment_runs() {
        let exp = QuadraticExperiment {
            rounds: 3,
            run_seeds: vec![0, 1],
            ..QuadraticExperiment::default()
        };
        let runs = exp.run().unwrap();
        assert_eq!(runs.runs.len(), 2);
        assert_eq!(runs.runs[0].records.len(), 31);
        let rep = runs.report(1.0).unwrap();
        assert_eq!(rep.server.steps.len(), 31);
    }
}
