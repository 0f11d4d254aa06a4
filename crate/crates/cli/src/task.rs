use minibatch_sfl::algorithms::{Algorithm, TrainConfig};
use minibatch_sfl::checks::classification::ClassificationExperiment;
use minibatch_sfl::checks::quadratic::QuadraticExperiment;
use minibatch_sfl::data::{load_idx, partition_noniid, point_model, Dataset, Shard};
use minibatch_sfl::nn::{Activation, LayerSpec, ModelParams};
use minibatch_sfl::seed::{derive, stream};

use crate::config::{ExperimentConfig, TaskKind};
use crate::error::{CliError, Result};

/// Everything one training run needs besides its config.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Dataset,
    pub eval: Dataset,
    pub shards: Vec<Shard>,
    pub layers: Vec<LayerSpec>,
    pub init: Option<ModelParams>,
    pub w_star: Option<ModelParams>,
}

fn classifier(dim: usize, hidden: &[usize], classes: usize) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut width = dim;
    for &h in hidden {
        specs.push(LayerSpec::dense(width, h, Activation::Relu));
        width = h;
    }
    specs.push(LayerSpec::dense(
        width,
        classes,
        Activation::SoftmaxXentHead,
    ));
    specs
}

/// The data of the cell `(r, seed)`.
pub fn prepare(cfg: &ExperimentConfig, r: f64, seed: u64) -> Result<TaskData> {
    let data_seed = cfg.data_seed.unwrap_or(seed);
    match cfg.task {
        TaskKind::SyntheticClassification => {
            let s = &cfg.synthetic;
            let exp = ClassificationExperiment {
                dim: s.dim,
                classes: s.classes,
                hidden: s.hidden.clone(),
                clients: cfg.clients,
                r,
                weights: cfg.weights,
                per_class: s.per_class,
                eval_per_class: s.eval_per_class,
                spread: s.spread,
                ..ClassificationExperiment::default()
            };
            let d = exp.data(data_seed)?;
            Ok(TaskData {
                train: d.train,
                eval: d.eval,
                shards: d.shards,
                layers: exp.layers(),
                init: None,
                w_star: None,
            })
        }
        TaskKind::Quadratic => {
            let q = &cfg.quadratic;
            let exp = QuadraticExperiment {
                clients: cfg.clients,
                dim: q.dim,
                per_client: q.per_client,
                noise: q.noise,
                center_spread: q.center_spread,
                data_seed,
                ..QuadraticExperiment::default()
            };
            let (train, shards, task) = exp.sample()?;
            let init = point_model(&vec![0.0; q.dim])?;
            Ok(TaskData {
                eval: train.clone(),
                train,
                shards,
                layers: init.specs(),
                init: Some(init),
                w_star: Some(point_model(task.w_star())?),
            })
        }
        TaskKind::IdxFiles => {
            let spec = &cfg.idx;
            let (images, labels) = match (&spec.images, &spec.labels) {
                (Some(i), Some(l)) => (i, l),
                _ => return Err(CliError::config("idx", "images and labels are required")),
            };
            let train = load_idx(images, labels)?;
            let eval = match (&spec.eval_images, &spec.eval_labels) {
                (Some(i), Some(l)) => load_idx(i, l)?,
                _ => train.clone(),
            };
            let classes = train
                .classes()
                .unwrap_or(2)
                .max(eval.classes().unwrap_or(2));
            let shards = partition_noniid(
                &train,
                cfg.clients,
                r,
                cfg.weights,
                derive(data_seed, &[stream::PARTITION]),
            )?;
            Ok(TaskData {
                layers: classifier(train.dim(), &spec.hidden, classes),
                train,
                eval,
                shards,
                init: None,
                w_star: None,
            })
        }
    }
}

/// The training config of one cell.
pub fn train_config(
    cfg: &ExperimentConfig,
    data: &TaskData,
    algorithm: Algorithm,
    cut: usize,
    seed: u64,
) -> TrainConfig {
    let mut t = TrainConfig::new(data.layers.clone(), data.shards.len());
    t.algorithm = algorithm;
    t.rounds = cfg.rounds;
    t.local_epochs = cfg.local_epochs;
    t.batches_per_epoch = cfg.batches_per_epoch;
    t.batch_size = cfg.batch_size;
    t.cut = cut;
    t.schedule = cfg.schedule;
    t.seed = seed;
    t.sfl_v2_shuffle = cfg.sfl_v2_shuffle;
    t.log = cfg.log;
    t.init = data.init.clone();
    t
}
