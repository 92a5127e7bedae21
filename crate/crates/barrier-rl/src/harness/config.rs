//! Run configuration: a TOML file with full field coverage and no silent
//! typo tolerance (unknown fields are a load-time error).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{OptimizerArm, TrainSpec};
use crate::ensemble::FitConfig;
use crate::env::{generate_layout, DynamicsParams, LayoutParams, PointEnv, PointHazardLayout};
use crate::error::{Error, Result};
use crate::opt::{BarrierConfig, LagrangianConfig};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Steps per episode (T).
    pub horizon: usize,
    /// `guarded` (the authored default task) or `seeded` (random layout from
    /// `layout_seed`); a `layout_file` overrides both.
    pub layout_mode: String,
    /// Episode cost budget, quoted at `cost_budget_horizon` steps; the
    /// runtime budget is prorated: `d_scaled = cost_budget * horizon /
    /// cost_budget_horizon`.
    pub cost_budget: f64,
    pub cost_budget_horizon: usize,
    pub layout_seed: u64,
    pub n_hazards: usize,
    pub hazard_radius: f64,
    pub arena_half_width: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    /// Distance spawns keep from hazard edges.
    pub spawn_margin: f64,
    pub beta: f64,
    pub dt: f64,
    pub noise_std: f64,
    /// When set, the layout is loaded from this file instead of generated.
    pub layout_file: Option<PathBuf>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            horizon: 200,
            layout_mode: "guarded".into(),
            cost_budget: 25.0,
            cost_budget_horizon: 1000,
            layout_seed: 7,
            n_hazards: 8,
            hazard_radius: 0.4,
            arena_half_width: 2.0,
            goal: [1.5, 1.5],
            goal_radius: 0.3,
            spawn_margin: 0.5,
            beta: 0.9,
            dt: 0.1,
            noise_std: 0.01,
            layout_file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub hidden: usize,
    pub init_log_std: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { hidden: 32, init_log_std: -3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub members: usize,
    pub hidden: usize,
    pub lr: f64,
    /// Learning rate for warm-started refits (cold fits use `lr`).
    pub refit_lr: f64,
    pub lr_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Cold-start fit budget (epoch 0).
    pub initial_epochs: usize,
    pub initial_steps_per_epoch: usize,
    /// Warm-start refit budget (every later epoch).
    pub refit_epochs: usize,
    pub refit_steps_per_epoch: usize,
    pub min_transitions: usize,
    pub grad_clip: f64,
    pub weight_decay: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            members: 5,
            hidden: 64,
            lr: 5e-3,
            refit_lr: 1.5e-3,
            lr_decay: 1.0,
            momentum: 0.9,
            batch_size: 64,
            initial_epochs: 12,
            initial_steps_per_epoch: 150,
            refit_epochs: 4,
            refit_steps_per_epoch: 40,
            min_transitions: 64,
            grad_clip: 10.0,
            weight_decay: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// `lbsgd` or `lagrangian`.
    pub optimizer: String,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub warmup_epochs: usize,
    pub policy_updates_per_epoch: usize,
    pub eval_episodes: usize,
    pub imagination_horizon: usize,
    pub imagination_batch: usize,
    /// Imagination start states come from the most recent N transitions
    /// (0 = whole buffer).
    pub imagination_window: usize,
    pub buffer_capacity: usize,
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub model: ModelConfig,
    pub barrier: BarrierConfig,
    pub lagrangian: LagrangianConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            optimizer: "lbsgd".into(),
            epochs: 50,
            episodes_per_epoch: 2,
            warmup_epochs: 10,
            policy_updates_per_epoch: 3,
            eval_episodes: 10,
            imagination_horizon: 15,
            imagination_batch: 160,
            imagination_window: 2000,
            buffer_capacity: 100_000,
            env: EnvConfig::default(),
            policy: PolicyConfig::default(),
            model: ModelConfig::default(),
            barrier: BarrierConfig { lr: 2e-3, grad_clip: 0.5, ..Default::default() },
            lagrangian: LagrangianConfig { lr: 0.02, dual_interval: 16, grad_clip: 2.0, ..Default::default() },
        }
    }
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        let cfg: TrainConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("config `{}`: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("config serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema version {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        OptimizerArm::parse(&self.optimizer)?;
        for (name, v) in [
            ("epochs", self.epochs),
            ("episodes_per_epoch", self.episodes_per_epoch),
            ("policy_updates_per_epoch", self.policy_updates_per_epoch),
            ("eval_episodes", self.eval_episodes),
            ("imagination_horizon", self.imagination_horizon),
            ("imagination_batch", self.imagination_batch),
        ] {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.env.cost_budget < 0.0 {
            return Err(Error::Config("cost_budget must be >= 0".into()));
        }
        if self.env.cost_budget_horizon < 1 {
            return Err(Error::Config("cost_budget_horizon must be >= 1".into()));
        }
        Ok(())
    }

    /// Episode budget prorated from the quoted horizon to the actual one.
    pub fn d_scaled(&self) -> f64 {
        self.env.cost_budget * self.env.horizon as f64 / self.env.cost_budget_horizon as f64
    }

    pub fn layout(&self) -> Result<PointHazardLayout> {
        match &self.env.layout_file {
            Some(path) => PointHazardLayout::load(path),
            None => match self.env.layout_mode.as_str() {
                "guarded" => {
                    let layout = PointHazardLayout::guarded_goal();
                    layout.validate()?;
                    Ok(layout)
                }
                "seeded" => generate_layout(
                    self.env.layout_seed,
                    &LayoutParams {
                        n_hazards: self.env.n_hazards,
                        hazard_radius: self.env.hazard_radius,
                        arena_half_width: self.env.arena_half_width,
                        goal: self.env.goal,
                        goal_radius: self.env.goal_radius,
                    },
                ),
                other => Err(Error::Config(format!(
                    "layout_mode must be `guarded` or `seeded`, got `{other}`"
                ))),
            },
        }
    }

    pub fn build_env(&self) -> Result<PointEnv> {
        PointEnv::with_spawn_margin(
            PointEnv::default_spec(self.env.horizon, self.d_scaled()),
            self.layout()?,
            DynamicsParams { beta: self.env.beta, dt: self.env.dt, noise_std: self.env.noise_std },
            self.env.spawn_margin,
        )
    }

    /// Resolve to a runnable spec, optionally overriding the arm and seed.
    pub fn to_spec(&self, arm: Option<OptimizerArm>, seed: Option<u64>) -> Result<TrainSpec> {
        let arm = match arm {
            Some(a) => a,
            None => OptimizerArm::parse(&self.optimizer)?,
        };
        let fit_base = FitConfig {
            members: self.model.members,
            hidden: self.model.hidden,
            lr: self.model.lr,
            lr_decay: self.model.lr_decay,
            momentum: self.model.momentum,
            batch_size: self.model.batch_size,
            epochs: self.model.initial_epochs,
            steps_per_epoch: self.model.initial_steps_per_epoch,
            min_transitions: self.model.min_transitions,
            grad_clip: self.model.grad_clip,
            weight_decay: self.model.weight_decay,
        };
        Ok(TrainSpec {
            arm,
            seed: seed.unwrap_or(self.seed),
            epochs: self.epochs,
            episodes_per_epoch: self.episodes_per_epoch,
            warmup_epochs: self.warmup_epochs,
            policy_updates_per_epoch: self.policy_updates_per_epoch,
            eval_episodes: self.eval_episodes,
            imagination_horizon: self.imagination_horizon,
            imagination_batch: self.imagination_batch,
            imagination_window: self.imagination_window,
            policy_hidden: self.policy.hidden,
            policy_init_log_std: self.policy.init_log_std,
            fit_initial: fit_base.clone(),
            fit_refit: FitConfig {
                epochs: self.model.refit_epochs,
                steps_per_epoch: self.model.refit_steps_per_epoch,
                lr: self.model.refit_lr,
                ..fit_base
            },
            barrier: self.barrier.clone(),
            lagrangian: self.lagrangian.clone(),
            buffer_capacity: self.buffer_capacity,
        })
    }

    /// FNV-1a over the canonical JSON form; changes iff any field changes.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in json.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_desk_scale() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.env.horizon, 200);
        assert_eq!(cfg.eval_episodes, 10);
        assert_eq!(cfg.d_scaled(), 5.0, "25 * 200 / 1000");
        cfg.build_env().unwrap();
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = TrainConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        cfg.save(&path).unwrap();
        let loaded = TrainConfig::load(&path).unwrap();
        assert_eq!(cfg, loaded);
    }

    #[test]
    fn unknown_fields_fail_loudly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "epochs = 3\ntypo_field = 1\n").unwrap();
        let err = TrainConfig::load(&path).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("typo_field"), "{err}");
    }

    #[test]
    fn partial_config_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "epochs = 3\nseed = 9\n[env]\nhorizon = 50\n").unwrap();
        let cfg = TrainConfig::load(&path).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.env.horizon, 50);
        assert_eq!(cfg.env.n_hazards, 8);
        assert_eq!(cfg.d_scaled(), 25.0 * 50.0 / 1000.0);
    }

    #[test]
    fn hash_changes_iff_any_field_changes() {
        let base = TrainConfig::default();
        let h0 = base.hash();
        assert_eq!(h0, TrainConfig::default().hash(), "same config, same hash");
        let mut c = base.clone();
        c.seed = 1;
        assert_ne!(c.hash(), h0);
        let mut c = base.clone();
        c.env.noise_std = 0.02;
        assert_ne!(c.hash(), h0);
        let mut c = base.clone();
        c.barrier.eta0 = 0.2;
        assert_ne!(c.hash(), h0);
    }

    #[test]
    fn bad_optimizer_is_rejected() {
        let mut cfg = TrainConfig::default();
        cfg.optimizer = "newton".into();
        assert!(cfg.validate().is_err());
    }
}
