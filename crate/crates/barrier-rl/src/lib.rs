//! Pessimistic model-based safe reinforcement learning for constrained MDPs.
//!
//! The pieces, bottom to top:
//!
//! - [`tensor`] / [`autodiff`]: dense `f64` arrays and a minimal reverse-mode
//!   tape, enough to differentiate multi-step model rollouts and barrier
//!   objectives with respect to policy parameters.
//! - [`env`]: a 2-D point-navigation task with hazard discs plus analytic
//!   constrained problems for exercising the optimizer in isolation.
//! - [`ensemble`]: a probabilistic ensemble of learned dynamics/reward/cost
//!   models; disagreement across members stands in for epistemic uncertainty.
//! - [`pessimism`]: imagined rollouts per ensemble member and worst-case
//!   (max over members) constraint evaluation, with gradients obtained by
//!   backpropagating through the worst-case model.
//! - [`opt`]: the feasibility-preserving log-barrier stochastic optimizer and
//!   an augmented-Lagrangian baseline.
//! - [`agent`]: the policy, real-environment episode collection, and the
//!   collect / fit / improve / evaluate training loop.
//! - [`harness`]: configs, metrics, seed sweeps, reports, and the CLI.
//!
//! See the crate's `examples/` directory for one runnable program per major
//! capability; the `barrier-rl` binary is a thin wrapper over
//! [`harness::cli`].

pub mod agent;
pub mod autodiff;
pub mod ensemble;
pub mod env;
pub mod error;
pub mod harness;
pub mod opt;
pub mod pessimism;
pub mod tensor;

pub use error::{Error, Result};
