//! Hazard layouts for the point-navigation task, including the TOML file
//! format (load -> save -> load is identity).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard minimum margin (meters) a spawn point must keep from every hazard
/// edge. Environments may demand more (see `EnvConfig::spawn_margin`).
pub const SPAWN_MARGIN_MIN: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hazard {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointHazardLayout {
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub arena_half_width: f64,
    pub seed: u64,
    #[serde(default)]
    pub hazards: Vec<Hazard>,
}

impl PointHazardLayout {
    /// Checks the layout invariants: the goal center lies outside every
    /// hazard, and a safe spawn point (outside all hazards with margin)
    /// exists somewhere in the arena.
    pub fn validate(&self) -> Result<()> {
        if !(self.arena_half_width > 0.0) || !(self.goal_radius > 0.0) {
            return Err(Error::Layout("arena and goal radius must be positive".into()));
        }
        for h in &self.hazards {
            if !(h.radius > 0.0) {
                return Err(Error::Layout("hazard radius must be positive".into()));
            }
            if dist(self.goal, h.center) <= h.radius {
                return Err(Error::Layout(format!(
                    "goal {:?} lies inside hazard at {:?}",
                    self.goal, h.center
                )));
            }
        }
        if !self.has_safe_spawn(SPAWN_MARGIN_MIN) {
            return Err(Error::Layout(
                "hazards cover the arena: no spawn point clears every hazard by the margin".into(),
            ));
        }
        Ok(())
    }

    /// Deterministic grid probe for a point outside all hazards with margin.
    pub fn has_safe_spawn(&self, margin: f64) -> bool {
        let n = 101;
        let w = self.arena_half_width;
        for i in 0..n {
            for j in 0..n {
                let p = [
                    -w + 2.0 * w * (i as f64) / ((n - 1) as f64),
                    -w + 2.0 * w * (j as f64) / ((n - 1) as f64),
                ];
                if self.point_is_safe_spawn(p, margin) {
                    return true;
                }
            }
        }
        false
    }

    pub fn point_is_safe_spawn(&self, p: [f64; 2], margin: f64) -> bool {
        self.hazards.iter().all(|h| dist(p, h.center) >= h.radius + margin)
    }

    pub fn point_in_hazard(&self, p: [f64; 2]) -> bool {
        self.hazards.iter().any(|h| dist(p, h.center) <= h.radius)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("layout serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("layout file {}: {e}", path.display())))?;
        let layout: PointHazardLayout =
            toml::from_str(&text).map_err(|e| Error::Config(format!("layout parse: {e}")))?;
        layout.validate()?;
        Ok(layout)
    }
}

impl PointHazardLayout {
    /// The default desk-scale task: a goal in the upper-right quadrant
    /// guarded by a three-hazard arc with narrow gaps, plus mid-field
    /// hazards. Reaching the goal from most of the arena requires skirting
    /// hazards, which is what separates a safe learner from a reckless one.
    pub fn guarded_goal() -> Self {
        let r = 0.4;
        PointHazardLayout {
            goal: [1.4, 1.4],
            goal_radius: 0.3,
            arena_half_width: 2.0,
            seed: 0,
            hazards: vec![
                // guard arc at 1.45 m from the goal
                Hazard { center: [-0.05, 1.4], radius: r },
                Hazard { center: [0.375, 0.375], radius: r },
                Hazard { center: [1.4, -0.05], radius: r },
                // plug the pocket between the arc and the goal
                Hazard { center: [0.95, 0.95], radius: r },
                // mid-field scatter
                Hazard { center: [-1.2, 0.9], radius: r },
                Hazard { center: [0.9, -1.2], radius: r },
                Hazard { center: [-1.0, -0.35], radius: r },
                Hazard { center: [-0.35, -1.0], radius: r },
            ],
        }
    }
}

/// Knobs for random layout generation.
#[derive(Clone, Debug)]
pub struct LayoutParams {
    pub n_hazards: usize,
    pub hazard_radius: f64,
    pub arena_half_width: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            n_hazards: 8,
            hazard_radius: 0.4,
            arena_half_width: 2.0,
            goal: [1.5, 1.5],
            goal_radius: 0.3,
        }
    }
}

/// Randomly place hazards, rejection-sampling whole layouts until the
/// invariants hold (goal uncovered, safe spawn exists). Generated layouts
/// additionally keep every hazard clear of the goal disc, so a policy parked
/// on the goal is hazard-free.
pub fn generate_layout(seed: u64, params: &LayoutParams) -> Result<PointHazardLayout> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = params.arena_half_width;
    for _attempt in 0..100 {
        let mut hazards = Vec::with_capacity(params.n_hazards);
        while hazards.len() < params.n_hazards {
            let r = params.hazard_radius;
            let lim = (w - r).max(0.0);
            let center = [rng.random_range(-lim..lim), rng.random_range(-lim..lim)];
            if dist(center, params.goal) < r + params.goal_radius + SPAWN_MARGIN_MIN {
                continue;
            }
            hazards.push(Hazard { center, radius: r });
        }
        let layout = PointHazardLayout {
            goal: params.goal,
            goal_radius: params.goal_radius,
            arena_half_width: w,
            seed,
            hazards,
        };
        if layout.validate().is_ok() {
            return Ok(layout);
        }
    }
    Err(Error::Layout(format!(
        "could not generate a valid layout from seed {seed} in 100 attempts"
    )))
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_layout_is_valid() {
        let layout = generate_layout(7, &LayoutParams::default()).unwrap();
        layout.validate().unwrap();
        assert_eq!(layout.hazards.len(), 8);
    }

    #[test]
    fn tiling_hazards_fail_validation() {
        // One huge hazard swallowing the whole arena.
        let layout = PointHazardLayout {
            goal: [10.0, 10.0], // outside the hazard so only the spawn check trips
            goal_radius: 0.3,
            arena_half_width: 2.0,
            seed: 0,
            hazards: vec![Hazard { center: [0.0, 0.0], radius: 6.0 }],
        };
        assert!(matches!(layout.validate(), Err(Error::Layout(_))));
    }

    #[test]
    fn goal_inside_hazard_fails_validation() {
        let layout = PointHazardLayout {
            goal: [0.0, 0.0],
            goal_radius: 0.3,
            arena_half_width: 2.0,
            seed: 0,
            hazards: vec![Hazard { center: [0.1, 0.0], radius: 0.5 }],
        };
        assert!(matches!(layout.validate(), Err(Error::Layout(_))));
    }

    #[test]
    fn file_roundtrip_is_identity() {
        let layout = generate_layout(3, &LayoutParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("layout.toml");
        layout.save(&path).unwrap();
        let loaded = PointHazardLayout::load(&path).unwrap();
        assert_eq!(layout, loaded);
        // save the loaded copy again: bytes must agree too
        let path2 = dir.path().join("layout2.toml");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = "goal = [1.0, 1.0]\ngoal_radius = 0.3\narena_half_width = 2.0\nseed = 1\nbogus = 4\n";
        let r: std::result::Result<PointHazardLayout, _> = toml::from_str(text);
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_random_layouts(seed in 0u64..500) {
            let params = LayoutParams::default();
            if let Ok(layout) = generate_layout(seed, &params) {
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("l.toml");
                layout.save(&path).unwrap();
                let loaded = PointHazardLayout::load(&path).unwrap();
                prop_assert_eq!(layout, loaded);
            }
        }
    }
}
