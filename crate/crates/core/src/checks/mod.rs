//! Reusable verification harnesses. Each returns the measured quantity so
//! callers can compare it against their own tolerance.

pub mod analytic;
pub mod classification;
pub mod equivalence;
pub mod gradients;
pub mod noniid;
pub mod quadratic;
