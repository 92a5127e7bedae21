//! Double-integrator point navigation with hazard discs.
//!
//! Dynamics per step: `vel' = beta*vel + dt*a + sigma*xi`, `pos' = pos + dt*vel'`,
//! position clamped to the arena box. Reward is the decrease in distance to
//! goal plus a bonus while inside the goal disc; cost is the indicator of the
//! post-step position lying inside any hazard disc.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::layout::{dist, PointHazardLayout, SPAWN_MARGIN_MIN};
use crate::error::{Error, Result};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsParams {
    /// Velocity retention per step.
    pub beta: f64,
    /// Integration step (seconds).
    pub dt: f64,
    /// Std of the Gaussian velocity noise.
    pub noise_std: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        DynamicsParams { beta: 0.9, dt: 0.1, noise_std: 0.01 }
    }
}

/// Episode-level contract of a constrained MDP instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmdpSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    /// Steps per episode.
    pub horizon: usize,
    /// Expected-cost budget per episode (already scaled to `horizon`).
    pub cost_budget: f64,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

impl CmdpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.cost_budget < 0.0 {
            return Err(Error::Config("cost budget must be >= 0".into()));
        }
        if self.action_low.len() != self.action_dim || self.action_high.len() != self.action_dim {
            return Err(Error::Config("action bounds must match action_dim".into()));
        }
        for (lo, hi) in self.action_low.iter().zip(&self.action_high) {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::Config(format!(
                    "action bounds must be finite with low < high, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Full environment state; fields are public so tests can place the point
/// anywhere (e.g. at a hazard center).
#[derive(Clone, Debug)]
pub struct EnvState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub step: usize,
    pub rng: ChaCha8Rng,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub cost: f64,
    pub done: bool,
}

pub struct PointEnv {
    pub spec: CmdpSpec,
    pub layout: PointHazardLayout,
    pub dynamics: DynamicsParams,
    /// Distance a spawn keeps from every hazard edge (>= SPAWN_MARGIN_MIN).
    pub spawn_margin: f64,
}

impl PointEnv {
    pub fn new(spec: CmdpSpec, layout: PointHazardLayout, dynamics: DynamicsParams) -> Result<Self> {
        Self::with_spawn_margin(spec, layout, dynamics, 0.5)
    }

    pub fn with_spawn_margin(
        spec: CmdpSpec,
        layout: PointHazardLayout,
        dynamics: DynamicsParams,
        spawn_margin: f64,
    ) -> Result<Self> {
        spec.validate()?;
        layout.validate()?;
        if spawn_margin < SPAWN_MARGIN_MIN {
            return Err(Error::Config(format!(
                "spawn margin {spawn_margin} below the minimum {SPAWN_MARGIN_MIN}"
            )));
        }
        if !layout.has_safe_spawn(spawn_margin) {
            return Err(Error::Layout(format!(
                "no spawn point clears every hazard by {spawn_margin}"
            )));
        }
        if spec.state_dim != 4 || spec.action_dim != 2 {
            return Err(Error::Config(
                "point environment is 4-state (pos, vel), 2-action".into(),
            ));
        }
        Ok(PointEnv { spec, layout, dynamics, spawn_margin })
    }

    /// Spec with the default desk-scale contract: T steps, budget d, unit box actions.
    pub fn default_spec(horizon: usize, cost_budget: f64) -> CmdpSpec {
        CmdpSpec {
            state_dim: 4,
            action_dim: 2,
            horizon,
            cost_budget,
            action_low: vec![-1.0, -1.0],
            action_high: vec![1.0, 1.0],
        }
    }

    /// Sample an initial state: position uniform over the arena, rejected
    /// until outside every hazard by the spawn margin; velocity zero.
    pub fn reset(&self, seed: u64) -> Result<EnvState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self.layout.arena_half_width;
        for _ in 0..10_000 {
            let pos = [rng.random_range(-w..w), rng.random_range(-w..w)];
            if self.layout.point_is_safe_spawn(pos, self.spawn_margin) {
                return Ok(EnvState { pos, vel: [0.0, 0.0], step: 0, rng });
            }
        }
        Err(Error::Layout(format!(
            "no safe spawn found in 10000 draws (margin {})",
            self.spawn_margin
        )))
    }

    pub fn state_vector(state: &EnvState) -> Vec<f64> {
        vec![state.pos[0], state.pos[1], state.vel[0], state.vel[1]]
    }

    pub fn step(&self, state: &mut EnvState, action: &[f64]) -> Result<StepOutcome> {
        if state.step >= self.spec.horizon {
            return Err(Error::Protocol(format!(
                "step called on a finished episode (step {} of {})",
                state.step, self.spec.horizon
            )));
        }
        if action.len() != self.spec.action_dim {
            return Err(Error::ShapeMismatch(format!(
                "action has {} dims, expected {}",
                action.len(),
                self.spec.action_dim
            )));
        }
        let d = &self.dynamics;
        let prev_goal_dist = dist(state.pos, self.layout.goal);

        let mut new_vel = [0.0; 2];
        let mut new_pos = [0.0; 2];
        for k in 0..2 {
            let a = action[k].clamp(self.spec.action_low[k], self.spec.action_high[k]);
            let xi: f64 = StandardNormal.sample(&mut state.rng);
            new_vel[k] = d.beta * state.vel[k] + d.dt * a + d.noise_std * xi;
            new_pos[k] = (state.pos[k] + d.dt * new_vel[k])
                .clamp(-self.layout.arena_half_width, self.layout.arena_half_width);
        }
        state.vel = new_vel;
        state.pos = new_pos;
        state.step += 1;

        let new_goal_dist = dist(state.pos, self.layout.goal);
        let mut reward = prev_goal_dist - new_goal_dist;
        if new_goal_dist <= self.layout.goal_radius {
            reward += 1.0;
        }
        let cost = if self.layout.point_in_hazard(state.pos) { 1.0 } else { 0.0 };
        Ok(StepOutcome { reward, cost, done: state.step == self.spec.horizon })
    }
}
