//! Constrained stochastic optimizers.
//!
//! [`lbsgd`] is the feasibility-preserving log-barrier ascent: every accepted
//! iterate satisfies the (model-evaluated) constraint strictly, enforced by an
//! adaptive step size plus a backtracking guard. [`lagrangian`] is the
//! augmented-Lagrangian comparison arm, which permits transient infeasibility
//! and that asymmetry is the experiment's point.

pub mod lagrangian;
pub mod lbsgd;

pub use lagrangian::{LagrangianConfig, LagrangianOptState};
pub use lbsgd::{barrier_gradient, barrier_value, BarrierConfig, BarrierOptState, LedgerEntry};
