//! Step-size schedules, run configuration and the baseline algorithms.

mod baselines;
mod config;
mod schedule;

pub use baselines::{
    run, run_centralized, run_fedavg, run_minibatch_sfl, run_minibatch_sgd, run_sfl_v2,
};
pub use config::{Algorithm, LogOptions, TrainConfig};
pub use schedule::{gamma, lr_at, ScheduleMode, ScheduleParams};
