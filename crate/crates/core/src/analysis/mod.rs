//! Convergence-bound calculators, empirical lemma checks, gradient-variance
//! diagnostics and rate fitting.

mod bounds;
mod lemmas;
mod rate;
mod variance;

pub use bounds::{
    check_trajectory_vs_bound, combine_bounds, h_constant, mean_trajectory, prop1_bound,
    prop2_bound, theorem1_bound, BoundInputs, BoundReport, Side,
};
pub use lemmas::{check_divergence_lemma, check_variance_lemma, LemmaReport};
pub use rate::{rate_fit, RateFit};
pub use variance::{
    grad_variance_across_clients, grad_variance_at_client, population_variance_sum,
};
