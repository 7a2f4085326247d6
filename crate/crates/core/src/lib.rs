//! Numerical laboratory for scheduled score-based diffusion models.
//!
//! The forward process is the time-changed OU diffusion
//! `dX = -g'(t) X dt + sqrt(g'(t)) dW` with invariant law `N(0, I/2)`.
//! Targets are Gaussian or empirical, so every forward marginal and score is
//! available in closed form and all errors of the generative pipeline can be
//! measured directly:
//!
//! * [`scheduler`]: linear, optimal, cosine and piecewise time changes.
//! * [`marginals`]: forward marginals, their scores, samplers and relative
//!   Fisher information.
//! * [`reverse`]: the discretized reverse-time sampler with frozen scores
//!   and the exact per-interval OU kernel.
//! * [`gaussian_oracle`]: the exact mean recursion and discretization bias
//!   for Gaussian targets.
//! * [`weak_error`]: test functionals and weak/statistical error experiments.
//! * [`variational`]: numerical solution of the scheduler variational problem.
//! * [`jump`]: the two-state jump-process analogue.

pub mod error;
pub mod gaussian_oracle;
pub mod jump;
pub mod marginals;
pub mod quadrature;
pub mod report;
pub mod reverse;
pub mod rng;
pub mod scheduler;
pub mod stats;
pub mod variational;
pub mod weak_error;

pub use error::{LabError, Result};
pub use marginals::{marginal_at, InvariantMeasure, Marginal, TargetSpec};
pub use reverse::{Integrator, ReverseConfig, ScoreModel, ScoreVariant};
pub use scheduler::{Scheduler, SchedulerKind};

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
