//! Episodic CMDP environments: a 2-D point-navigation task with hazard
//! regions, plus analytic constrained problems for testing the optimizer in
//! isolation.

mod analytic;
mod layout;
mod point;

pub use analytic::{analytic_problem, AnalyticProblem, ANALYTIC_PROBLEM_IDS};
pub use layout::{generate_layout, Hazard, LayoutParams, PointHazardLayout};
pub use point::{CmdpSpec, DynamicsParams, EnvState, PointEnv, StepOutcome};
