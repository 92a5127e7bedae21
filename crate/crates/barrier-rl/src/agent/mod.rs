//! The agent: policy, real-environment episode collection, evaluation, and
//! the collect / fit / improve / evaluate training loop.

mod policy;
mod trainer;

pub use policy::{ActMode, ActionBounds, Policy, PolicyDims, LOG_STD_MAX, LOG_STD_MIN};
pub(crate) use policy::{policy_forward_tape, squash_tape, PolicyTapeParams};
pub use trainer::{
    collect_episode, evaluate, train, EpochHook, EpochStats, OptimizerArm, TrainOutcome,
    TrainSpec, Trajectory,
};
