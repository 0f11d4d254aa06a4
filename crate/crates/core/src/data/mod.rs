//! Datasets, the label-skew partitioner, per-epoch batch plans, quadratic
//! verification tasks and empirical estimates of the analysis constants.

mod batching;
mod constants;
mod dataset;
mod partition;
mod quadratic;

pub use batching::{make_batch_plan, BatchPlan};
pub use constants::{estimate_constants, ConstantsEstimate, ParamScope, ProbeOptions};
pub use dataset::{gen_synthetic_classification, load_idx, Dataset};
pub use partition::{
    assign_weights, label_entropy, mean_label_entropy, partition_noniid, shard_weights, Shard,
    WeightsMode,
};
pub use quadratic::{
    build_quadratic_task, point_model, quadratic_constants, sample_quadratic_data, task_from_data,
    QuadraticConstants, QuadraticTask,
};
