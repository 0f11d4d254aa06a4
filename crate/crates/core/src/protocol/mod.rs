//! The split-training state machine: step indexing, the per-step update,
//! aggregation at sync points and the training driver shared by every
//! algorithm.

mod driver;
mod indexing;
mod log;
mod state;
mod step;

pub use driver::{batch_seed, initial_model, Evaluation, Observer};
pub(crate) use driver::{drive, Stepper};
pub use indexing::{step_coords, step_index, sync_points, SyncSchedule};
pub use log::{RunLog, StepRecord};
pub use state::SplitState;
pub use step::{maybe_sync, minibatch_sfl_step};

use crate::algorithms::{run_minibatch_sfl, TrainConfig};
use crate::data::{Dataset, Shard};
use crate::error::Result;

/// Trains with the split protocol for `T·E·M` steps, evaluating on
/// `eval` at step 0, every sync point and the last step (or every step).
pub fn run_training(
    cfg: &TrainConfig,
    dataset: &Dataset,
    shards: &[Shard],
    eval: &Evaluation<'_>,
) -> Result<RunLog> {
    run_minibatch_sfl(cfg, dataset, shards, eval, None)
}
