//! Deterministic simulator for split federated learning in which the main
//! server takes one averaged gradient step per round of smashed data, plus
//! the usual baselines, step-size schedules, convergence-bound calculators
//! and non-IID data tooling.

pub mod algorithms;
pub mod analysis;
pub mod checks;
pub mod data;
pub mod error;
pub mod nn;
pub mod protocol;
pub mod seed;

pub use error::{Error, Result};

/// Code blocks from the guide in `book/`, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/split-models.md")]
    mod split_models {}
    #[doc = include_str!("../../../book/src/training-step.md")]
    mod training_step {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/step-sizes-and-bounds.md")]
    mod step_sizes_and_bounds {}
    #[doc = include_str!("../../../book/src/non-iid-data.md")]
    mod non_iid_data {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
