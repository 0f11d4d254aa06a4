use serde::{Deserialize, Serialize};

use super::schedule::ScheduleParams;
use crate::error::{Error, Result};
use crate::nn::{validate_specs, LayerSpec, ModelParams};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    MinibatchSfl,
    Fedavg,
    SflV2,
    Centralized,
    MinibatchSgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::MinibatchSfl,
        Algorithm::Fedavg,
        Algorithm::SflV2,
        Algorithm::Centralized,
        Algorithm::MinibatchSgd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MinibatchSfl => "minibatch_sfl",
            Algorithm::Fedavg => "fedavg",
            Algorithm::SflV2 => "sfl_v2",
            Algorithm::Centralized => "centralized",
            Algorithm::MinibatchSgd => "minibatch_sgd",
        }
    }

    /// Whether the cut layer changes what the algorithm computes.
    pub fn uses_cut(self) -> bool {
        matches!(self, Algorithm::MinibatchSfl | Algorithm::SflV2)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What the training driver records besides the required columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogOptions {
    /// Record every step instead of step 0, sync steps and the last step.
    pub every_step: bool,
    /// Trailing window, in steps, for the per-client gradient variance.
    /// `None` means one epoch (`M` steps).
    pub grad_window: Option<usize>,
    /// Keep every client's client-side gradient at every step.
    pub keep_client_grads: bool,
    /// Also compute full-shard client gradients to log the noise of the
    /// averaged stochastic client gradient. Costs one pass over every shard
    /// per step.
    pub track_grad_noise: bool,
}

/// One training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    /// Number of clients N.
    pub clients: usize,
    /// Rounds T.
    pub rounds: usize,
    /// Local epochs per round E.
    pub local_epochs: usize,
    /// Mini-batches per epoch M.
    pub batches_per_epoch: usize,
    /// Batch size B.
    pub batch_size: usize,
    /// Cut layer L_c.
    pub cut: usize,
    pub layers: Vec<LayerSpec>,
    pub schedule: ScheduleParams,
    pub seed: u64,
    /// Visit clients in a seeded random order on the SFL-V2 server.
    pub sfl_v2_shuffle: bool,
    pub log: LogOptions,
    /// Starting model; drawn from `seed` when absent.
    #[serde(skip)]
    pub init: Option<ModelParams>,
}

impl TrainConfig {
    pub fn new(layers: Vec<LayerSpec>, clients: usize) -> Self {
        Self {
            algorithm: Algorithm::MinibatchSfl,
            clients,
            rounds: 1,
            local_epochs: 5,
            batches_per_epoch: 1,
            batch_size: 32,
            cut: 0,
            layers,
            schedule: ScheduleParams::default(),
            seed: 0,
            sfl_v2_shuffle: false,
            log: LogOptions::default(),
            init: None,
        }
    }

    /// `T·E·M`.
    pub fn total_steps(&self) -> usize {
        self.rounds * self.local_epochs * self.batches_per_epoch
    }

    pub fn steps_per_round(&self) -> usize {
        self.local_epochs * self.batches_per_epoch
    }

    pub fn grad_window(&self) -> usize {
        self.log.grad_window.unwrap_or(self.batches_per_epoch)
    }

    pub fn validate(&self) -> Result<()> {
        validate_specs(&self.layers)?;
        for (name, v) in [
            ("clients", self.clients),
            ("rounds", self.rounds),
            ("local_epochs", self.local_epochs),
            ("batches_per_epoch", self.batches_per_epoch),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return Err(Error::Invalid(format!("{name} must be at least 1")));
            }
        }
        if self.cut > self.layers.len() {
            return Err(Error::Invalid(format!(
                "cut = {} exceeds the {} model layers",
                self.cut,
                self.layers.len()
            )));
        }
        if self.log.grad_window == Some(0) {
            return Err(Error::Invalid("grad_window must be at least 1".into()));
        }
        if let Some(init) = &self.init {
            if init.specs() != self.layers {
                return Err(Error::Shape(
                    "initial model does not match the layers".into(),
                ));
            }
        }
        self.schedule.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn defaults_follow_reference_hyperparameters() {
        let c = TrainConfig::new(vec![LayerSpec::dense(2, 2, Activation::Identity)], 3);
        assert_eq!(c.local_epochs, 5);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.schedule.constant_lr, 0.01);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn cut_beyond_model_is_rejected() {
        let mut c = TrainConfig::new(vec![LayerSpec::dense(2, 2, Activation::Identity)], 3);
        c.cut = 2;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("cut"), "{err}");
    }
}
