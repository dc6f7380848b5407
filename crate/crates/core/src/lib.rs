//! Sampling-based model predictive control with deterministic Gaussian
//! samples.
//!
//! The crate implements dsMPPI, an iterative MPPI variant that replaces
//! random proposal samples with a precomputed deterministic standard-normal
//! sample set, together with the ablations it is usually compared against
//! (standard MPPI, iterative random-sampling MPPI and elite-weighted dsCEM).
//!
//! Layout:
//! - [`sampling`]: deterministic sample pools, their file format and the
//!   per-iteration variation schemes.
//! - [`correlation`]: colored-noise time correlation and its square root.
//! - [`proposal`]: the Gaussian proposal over flattened control sequences.
//! - [`weighting`]: exponential and elite weights, temperature adaptation.
//! - [`envs`]: cart-pole swing-up and truck backer-upper benchmarks.
//! - [`controller`]: the MPC step and method wiring.
//! - [`harness`]: metrics, experiment configuration and the sweep runner.

// NaN must fail range checks, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod correlation;
pub mod envs;
mod error;
pub mod harness;
pub mod proposal;
pub mod sampling;
mod special;
pub mod weighting;

pub use controller::{
    Controller, ControllerConfig, EliteBuffer, Method, ReturnRule, SampleSource, StepDiagnostics,
    StepOutput, Wiring,
};
pub use correlation::CorrelationStructure;
pub use envs::{CartPole, Env, QuadraticCost, RolloutResult, Task, Truck};
pub use error::{Error, Result};
pub use proposal::{ControlSequence, ProposalParams};
pub use sampling::{OptimizerConfig, PoolQuality, SamplePool, VariationScheme};
pub use weighting::{WeightingConfig, WeightingScheme};
