//! Dense-network engine: parameters, exact forward/backward passes across a
//! cut layer, and weighted model arithmetic.

mod matrix;
mod model;
mod ops;
mod pass;

pub use matrix::Matrix;
pub use model::{
    init_model, split_model, validate_specs, Activation, Layer, LayerKind, LayerSpec, ModelParams,
    SplitSpec,
};
pub use ops::{
    aggregate, check_weights, finite_diff_grad, sgd_step, weighted_average, WEIGHT_SUM_TOL,
};
pub use pass::{
    backward_client, backward_server, evaluate, forward_client, forward_server, full_gradient,
    loss, Batch, ForwardCache, ServerCache, SmashedData, Targets,
};
