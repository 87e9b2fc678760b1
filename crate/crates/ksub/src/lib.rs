//! k-submodular maximization through the multilinear extension.
//!
//! The crate is layered the way the algorithms are:
//!
//! * [`function`] / [`orthant`] — evaluation oracles over integral
//!   assignments, plus exhaustive validators ([`validate`]) and the
//!   brute-force optimum ([`brute`]) used as ground truth in tests.
//! * [`extension`] — the multilinear extension `F`: exact values,
//!   gradients and Hessian entries under an enumeration guard, and
//!   seeded Monte-Carlo estimators past it.
//! * [`polytope`] — the partition-matroid polytope and the continuous
//!   images of total-size / knapsack constraints, with boundary-step
//!   queries for the optimizers.
//! * [`optimize`] — the continuous meta-framework with pluggable
//!   direction rules, the argmax-gradient rule, the knapsack greedy and
//!   the partial-enumeration knapsack pipeline.
//! * [`rounding`] — dependent randomized rounding back to assignments,
//!   with statistical harnesses for the tail bounds.
//! * [`zoo`] / [`instance`] — seeded test-instance generation and the
//!   JSON instance file format shared with the CLI.

pub mod brute;
pub mod error;
pub mod extension;
pub mod function;
pub mod instance;
pub mod optimize;
pub mod orthant;
pub mod point;
pub mod polytope;
pub mod rounding;
pub mod validate;
pub mod zoo;

/// Shared feasibility tolerance on every polytope face and property check.
pub const FEAS_TOL: f64 = 1e-9;

pub use brute::brute_force_max;
pub use error::{KsubError, Result};
pub use extension::{
    eval_exact, eval_sampled, grad_exact, grad_sampled, hessian_entry_exact, samples_for,
    EstimatorConfig, MultilinearExtension,
};
pub use function::{
    marginal_gain, CoverageFunction, KSubFunction, ResidualFunction, Scaled, TabularFunction,
};
pub use orthant::{state_count, EnumerationGuard, OrthantVector};
pub use point::{FractionalPoint, GradientVector};
pub use polytope::{ConstraintSet, Knapsack, StepBinding};
pub use validate::{
    max_marginal_anywhere, validate_ksubmodular, validate_monotone, ValidationReport, Witness,
};
