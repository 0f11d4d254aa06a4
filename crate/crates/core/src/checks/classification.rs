use rayon::prelude::*;
use serde::Serialize;

use crate::algorithms::{run, Algorithm, ScheduleParams, TrainConfig};
use crate::data::{gen_synthetic_classification, partition_noniid, Dataset, Shard, WeightsMode};
use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec};
use crate::protocol::{Evaluation, RunLog};
use crate::seed::{derive, stream};

/// Non-IID synthetic classification with a two-hidden-layer network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationExperiment {
    pub dim: usize,
    pub classes: usize,
    /// Widths of the relu hidden layers.
    pub hidden: Vec<usize>,
    pub clients: usize,
    pub r: f64,
    pub weights: WeightsMode,
    /// Training samples per class.
    pub per_class: usize,
    /// Held-out evaluation samples per class.
    pub eval_per_class: usize,
    pub spread: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seeds: Vec<u64>,
}

impl Default for ClassificationExperiment {
    fn default() -> Self {
        Self {
            dim: 20,
            classes: 10,
            hidden: vec![32, 32],
            clients: 10,
            r: 0.9,
            weights: WeightsMode::BySize,
            per_class: 200,
            eval_per_class: 50,
            spread: 1.0,
            rounds: 20,
            local_epochs: 5,
            batches_per_epoch: 5,
            batch_size: 32,
            lr: 0.01,
            seeds: (0..10).collect(),
        }
    }
}

/// Data of one seed: training set, held-out set and shards.
pub struct SeedData {
    pub train: Dataset,
    pub eval: Dataset,
    pub shards: Vec<Shard>,
}

/// Final metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub cut: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub final_accuracy: f64,
    /// Mean over logged steps of the per-client windowed gradient variance.
    pub grad_var_at_client: Option<f64>,
    /// Mean over logged steps of the across-client gradient variance.
    pub grad_var_across_clients: Option<f64>,
}

impl RunSummary {
    pub fn from_log(log: &RunLog, seed: u64) -> Self {
        let mean = |f: fn(&crate::protocol::StepRecord) -> Option<f64>| {
            let vals: Vec<f64> = log.records.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let last = log.last();
        Self {
            algorithm: log.algorithm,
            cut: log.cut,
            seed,
            final_loss: last.loss,
            final_accuracy: last.accuracy.unwrap_or(f64::NAN),
            grad_var_at_client: mean(|r| r.grad_var_at_client_mean),
            grad_var_across_clients: mean(|r| r.grad_var_across_clients),
        }
    }
}

impl ClassificationExperiment {
    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::with_capacity(self.hidden.len() + 1);
        let mut width = self.dim;
        for &h in &self.hidden {
            specs.push(LayerSpec::dense(width, h, Activation::Relu));
            width = h;
        }
        specs.push(LayerSpec::dense(
            width,
            self.classes,
            Activation::SoftmaxXentHead,
        ));
        specs
    }

    pub fn data(&self, seed: u64) -> Result<SeedData> {
        let per = self.per_class + self.eval_per_class;
        let all = gen_synthetic_classification(
            self.dim,
            self.classes,
            per,
            self.spread,
            derive(seed, &[stream::DATA]),
        )?;
        // Samples are stored class by class; the last few of each class are held out.
        let (mut train_idx, mut eval_idx) = (Vec::new(), Vec::new());
        for k in 0..self.classes {
            train_idx.extend(k * per..k * per + self.per_class);
            eval_idx.extend(k * per + self.per_class..(k + 1) * per);
        }
        let train = all.select(&train_idx)?;
        let eval = all.select(&eval_idx)?;
        let shards = partition_noniid(
            &train,
            self.clients,
            self.r,
            self.weights,
            derive(seed, &[stream::PARTITION]),
        )?;
        Ok(SeedData {
            train,
            eval,
            shards,
        })
    }

    pub fn config(&self, algorithm: Algorithm, cut: usize, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.layers(), self.clients);
        cfg.algorithm = algorithm;
        cfg.cut = cut;
        cfg.rounds = self.rounds;
        cfg.local_epochs = self.local_epochs;
        cfg.batches_per_epoch = self.batches_per_epoch;
        cfg.batch_size = self.batch_size;
        cfg.schedule = ScheduleParams::constant(self.lr);
        cfg.seed = seed;
        cfg
    }

    /// Trains every `(algorithm, cut)` cell on every seed.
    pub fn run_cells(&self, cells: &[(Algorithm, usize)]) -> Result<Vec<RunSummary>> {
        if cells.is_empty() {
            return Err(Error::Invalid("no cells".into()));
        }
        let per_seed: Vec<Vec<RunSummary>> = self
            .seeds
            .par_iter()
            .map(|&seed| {
                let data = self.data(seed)?;
                let eval = Evaluation::on(&data.eval);
                cells
                    .iter()
                    .map(|&(alg, cut)| {
                        let cfg = self.config(alg, cut, seed);
                        let log = run(&cfg, &data.train, &data.shards, &eval)?;
                        Ok(RunSummary::from_log(&log, seed))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(per_seed.into_iter().flatten().collect())
    }
}

/// Summaries of one `(algorithm, cut)` cell in seed order.
pub fn cell(runs: &[RunSummary], alg: Algorithm, cut: usize) -> Vec<&RunSummary> {
    let mut out: Vec<&RunSummary> = runs
        .iter()
        .filter(|r| r.algorithm == alg && (r.cut == cut || !alg.uses_cut()))
        .collect();
    out.sort_by_key(|r| r.seed);
    out
}

/// Seeds on which `a`'s final loss is at most `b`'s.
pub fn loss_wins(a: &[&RunSummary], b: &[&RunSummary]) -> usize {
    a.iter()
        .zip(b)
        .filter(|(x, y)| x.seed == y.seed && x.final_loss <= y.final_loss)
        .count()
}

/// Seeds on which `values(cut)` is monotone over `cuts` in the given direction.
fn monotone_seeds(
    runs: &[RunSummary],
    cuts: &[usize],
    increasing: bool,
    value: fn(&RunSummary) -> Option<f64>,
) -> usize {
    let cells: Vec<Vec<&RunSummary>> = cuts
        .iter()
        .map(|&c| cell(runs, Algorithm::MinibatchSfl, c))
        .collect();
    let seeds = cells.first().map_or(0, Vec::len);
    (0..seeds)
        .filter(|&k| {
            let vals: Option<Vec<f64>> = cells.iter().map(|c| value(c[k])).collect();
            vals.is_some_and(|v| {
                v.windows(2).all(|w| {
                    if increasing {
                        w[0] <= w[1]
                    } else {
                        w[0] >= w[1]
                    }
                })
            })
        })
        .count()
}

/// Outcome of the algorithm comparison and the cut-layer sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub seeds: usize,
    /// Cut used for the split algorithms in the comparison.
    pub cut: usize,
    pub cut_sweep: Vec<usize>,
    /// Seeds where MiniBatch-SFL's final loss is at most SFL-V2's.
    pub wins_vs_sfl_v2: usize,
    /// Seeds where MiniBatch-SFL's final loss is at most FedAvg's.
    pub wins_vs_fedavg: usize,
    /// Seeds with final accuracy non-decreasing over the sweep.
    pub accuracy_monotone: usize,
    /// Seeds with the windowed per-client variance non-increasing over the sweep.
    pub var_at_client_monotone: usize,
    /// Seeds with the across-client variance non-increasing over the sweep.
    pub var_across_monotone: usize,
    /// Mean final accuracy per swept cut.
    pub mean_accuracy: Vec<f64>,
    pub runs: Vec<RunSummary>,
}

impl ClassificationExperiment {
    /// Cut used when comparing against the baselines.
    pub const COMPARISON_CUT: usize = 2;

    pub fn cut_sweep(&self) -> Vec<usize> {
        (1..=self.layers().len()).collect()
    }

    pub fn report(&self) -> Result<ClassificationReport> {
        let sweep = self.cut_sweep();
        let cut = Self::COMPARISON_CUT;
        let mut cells: Vec<(Algorithm, usize)> = sweep
            .iter()
            .map(|&c| (Algorithm::MinibatchSfl, c))
            .collect();
        cells.push((Algorithm::SflV2, cut));
        cells.push((Algorithm::Fedavg, self.layers().len()));
        let runs = self.run_cells(&cells)?;
        let ours = cell(&runs, Algorithm::MinibatchSfl, cut);
        let mean_accuracy = sweep
            .iter()
            .map(|&c| {
                let v = cell(&runs, Algorithm::MinibatchSfl, c);
                v.iter().map(|r| r.final_accuracy).sum::<f64>() / v.len() as f64
            })
            .collect();
        Ok(ClassificationReport {
            seeds: self.seeds.len(),
            cut,
            wins_vs_sfl_v2: loss_wins(&ours, &cell(&runs, Algorithm::SflV2, cut)),
            wins_vs_fedavg: loss_wins(&ours, &cell(&runs, Algorithm::Fedavg, 0)),
            accuracy_monotone: monotone_seeds(&runs, &sweep, true, |r| Some(r.final_accuracy)),
            var_at_client_monotone: monotone_seeds(&runs, &sweep, false, |r| r.grad_var_at_client),
            var_across_monotone: monotone_seeds(&runs, &sweep, false, |r| {
                r.grad_var_across_clients
            }),
            mean_accuracy,
            cut_sweep: sweep,
            runs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ClassificationExperiment {
        ClassificationExperiment {
            dim: 4,
            classes: 3,
            hidden: vec![5, 5],
            clients: 3,
            per_class: 20,
            eval_per_class: 5,
            rounds: 1,
            local_epochs: 1,
            batches_per_epoch: 2,
            batch_size: 4,
            seeds: vec![0, 1],
            ..Default::default()
        }
    }

    #[test]
    fn held_out_split_is_disjoint_and_balanced() {
        let exp = small();
        let d = exp.data(0).unwrap();
        assert_eq!(d.train.len(), 60);
        assert_eq!(d.eval.len(), 15);
        for k in 0..3 {
            assert_eq!(
                d.eval.labels().unwrap().iter().filter(|&&l| l == k).count(),
                5
            );
        }
        let covered: usize = d.shards.iter().map(|s| s.indices.len()).sum();
        assert_eq!(covered, 60);
    }

    #[test]
    fn report_counts_are_bounded_by_seeds() {
        let r = small().report().unwrap();
        assert_eq!(r.runs.len(), 2 * 5);
        for c in [
            r.wins_vs_sfl_v2,
            r.wins_vs_fedavg,
            r.accuracy_monotone,
            r.var_at_client_monotone,
            r.var_across_monotone,
        ] {
            assert!(c <= 2);
        }
        assert_eq!(r.mean_accuracy.len(), 3);
    }

    #[test]
    fn loss_wins_counts_ties() {
        let mk = |seed, final_loss| RunSummary {
            algorithm: Algorithm::MinibatchSfl,
            cut: 1,
            seed,
            final_loss,
            final_accuracy: 0.0,
            grad_var_at_client: None,
            grad_var_across_clients: None,
        };
        let a = [mk(0, 1.0), mk(1, 2.0)];
        let b = [mk(0, 1.0), mk(1, 1.5)];
        let (ra, rb): (Vec<_>, Vec<_>) = (a.iter().collect(), b.iter().collect());
        assert_eq!(loss_wins(&ra, &rb), 1);
    }
}
