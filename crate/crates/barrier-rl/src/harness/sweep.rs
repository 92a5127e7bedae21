//! Multi-seed, multi-arm sweeps. Each (seed, arm) run is fully independent:
//! its own directory, metrics stream, ledger, and checkpoints. Partial
//! failures are recorded in the manifest and do not stop the sweep.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::{now_unix_s, EpochRecord, MetricsWriter, RunHeader, METRICS_SCHEMA_VERSION};
use crate::agent::{train, EpochHook, EpochStats, OptimizerArm, Policy};
use crate::ensemble::EnsembleModel;
use crate::error::{Error, Result};

pub const CHECKPOINT_KEEP_LAST: usize = 3;

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub config: TrainConfig,
    pub seeds: Vec<u64>,
    pub arms: Vec<OptimizerArm>,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunEntry {
    pub seed: u64,
    pub arm: String,
    /// Relative to the manifest's directory.
    pub run_dir: String,
    pub metrics: String,
    pub status: String,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepManifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub runs: Vec<RunEntry>,
}

impl SweepManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("manifest `{}`: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest parse: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Full checkpoint of one epoch: policy plus ensemble.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub epoch: usize,
    pub policy: Policy,
    pub ensemble: EnsembleModel,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("checkpoint `{}`: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("checkpoint parse: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)
            .map_err(|e| Error::Config(format!("checkpoint serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Streams metrics and writes per-epoch checkpoints: keep the last 3 plus the
/// best feasible one (highest J-hat among epochs whose evaluated cost stays
/// within the budget).
struct RunHook {
    writer: MetricsWriter,
    ckpt_dir: PathBuf,
    d_scaled: f64,
    kept: VecDeque<(usize, PathBuf)>,
    best_feasible: Option<f64>,
}

impl RunHook {
    fn new(writer: MetricsWriter, ckpt_dir: PathBuf, d_scaled: f64) -> Result<Self> {
        std::fs::create_dir_all(&ckpt_dir)?;
        Ok(RunHook { writer, ckpt_dir, d_scaled, kept: VecDeque::new(), best_feasible: None })
    }
}

impl EpochHook for RunHook {
    fn on_epoch(
        &mut self,
        stats: &EpochStats,
        policy: &Policy,
        ensemble: &EnsembleModel,
    ) -> Result<()> {
        self.writer.write_epoch(&EpochRecord::from_stats(stats))?;

        let ckpt = Checkpoint {
            version: 1,
            epoch: stats.epoch,
            policy: policy.clone(),
            ensemble: ensemble.clone(),
        };
        let path = self.ckpt_dir.join(format!("epoch_{:04}.json", stats.epoch));
        ckpt.save(&path)?;
        self.kept.push_back((stats.epoch, path));
        while self.kept.len() > CHECKPOINT_KEEP_LAST {
            let (_, old) = self.kept.pop_front().expect("non-empty");
            let _ = std::fs::remove_file(old);
        }
        if stats.jc_hat <= self.d_scaled
            && self.best_feasible.map_or(true, |b| stats.j_hat > b)
        {
            self.best_feasible = Some(stats.j_hat);
            ckpt.save(&self.ckpt_dir.join("best.json"))?;
        }
        Ok(())
    }
}

/// Run one (config, arm, seed) training run into `run_dir`. Writes
/// `metrics.jsonl`, `checkpoints/`, and (for the barrier arm) `ledger.jsonl`.
pub fn run_single(cfg: &TrainConfig, arm: OptimizerArm, seed: u64, run_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(run_dir)?;
    let env = cfg.build_env()?;
    let spec = cfg.to_spec(Some(arm), Some(seed))?;
    let header = RunHeader {
        schema_version: METRICS_SCHEMA_VERSION,
        config_hash: format!("{:016x}", cfg.hash()),
        seed,
        arm: arm.name().into(),
        d_scaled: cfg.d_scaled(),
        horizon: cfg.env.horizon,
        eval_episodes: cfg.eval_episodes,
        start_time_unix_s: now_unix_s(),
    };
    let writer = MetricsWriter::create(&run_dir.join("metrics.jsonl"), &header)?;
    let mut hook = RunHook::new(writer, run_dir.join("checkpoints"), cfg.d_scaled())?;
    let outcome = train(&spec, &env, &mut hook)?;
    if arm == OptimizerArm::Lbsgd {
        use std::io::Write;
        let file = std::fs::File::create(run_dir.join("ledger.jsonl"))?;
        let mut w = std::io::BufWriter::new(file);
        for entry in &outcome.ledger {
            let line = serde_json::to_string(entry)
                .map_err(|e| Error::Config(format!("ledger serialize: {e}")))?;
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

fn run_dir_name(arm: OptimizerArm, seed: u64) -> String {
    format!("{}_seed{:03}", arm.name(), seed)
}

/// Run every (seed, arm) pair, bounded-parallel, and write `manifest.json`.
/// Individual failures are recorded and the sweep continues.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepManifest> {
    if spec.seeds.is_empty() {
        return Err(Error::Config("seed list must be non-empty".into()));
    }
    {
        let mut sorted = spec.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != spec.seeds.len() {
            return Err(Error::Config("seed list must be distinct".into()));
        }
    }
    if spec.arms.is_empty() {
        return Err(Error::Config("arm list must be non-empty".into()));
    }
    std::fs::create_dir_all(&spec.out_dir)?;

    let mut jobs: Vec<(OptimizerArm, u64)> = Vec::new();
    for &arm in &spec.arms {
        for &seed in &spec.seeds {
            jobs.push((arm, seed));
        }
    }

    let queue: Mutex<VecDeque<(usize, OptimizerArm, u64)>> =
        Mutex::new(jobs.iter().enumerate().map(|(i, &(a, s))| (i, a, s)).collect());
    let results: Mutex<Vec<Option<RunEntry>>> = Mutex::new(vec![None; jobs.len()]);

    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop_front();
                let Some((idx, arm, seed)) = job else { break };
                let dir_name = run_dir_name(arm, seed);
                let run_dir = spec.out_dir.join(&dir_name);
                let status = run_single(&spec.config, arm, seed, &run_dir);
                let entry = RunEntry {
                    seed,
                    arm: arm.name().into(),
                    run_dir: dir_name.clone(),
                    metrics: format!("{dir_name}/metrics.jsonl"),
                    status: if status.is_ok() { "ok".into() } else { "failed".into() },
                    error: status.err().map(|e| e.to_string()),
                };
                results.lock().expect("results lock")[idx] = Some(entry);
            });
        }
    });

    let manifest = SweepManifest {
        schema_version: 1,
        config_hash: format!("{:016x}", spec.config.hash()),
        runs: results
            .into_inner()
            .expect("results lock")
            .into_iter()
            .map(|e| e.expect("every job produced an entry"))
            .collect(),
    };
    manifest.save(&spec.out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::load_metrics;

    /// Small config for fast end-to-end sweep tests.
    pub(crate) fn tiny_config(seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.seed = seed;
        cfg.epochs = 2;
        cfg.episodes_per_epoch = 2;
        cfg.policy_updates_per_epoch = 2;
        cfg.eval_episodes = 2;
        cfg.imagination_horizon = 5;
        cfg.imagination_batch = 8;
        cfg.env.horizon = 40;
        cfg.policy.hidden = 16;
        cfg.model.members = 2;
        cfg.model.hidden = 16;
        cfg.model.batch_size = 32;
        cfg.model.initial_epochs = 6;
        cfg.model.initial_steps_per_epoch = 80;
        cfg.model.refit_epochs = 1;
        cfg.model.refit_steps_per_epoch = 20;
        cfg.model.min_transitions = 32;
        cfg
    }

    #[test]
    fn sweep_writes_one_metrics_file_per_run_and_a_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SweepSpec {
            config: tiny_config(0),
            seeds: vec![0, 1],
            arms: vec![OptimizerArm::Lbsgd, OptimizerArm::Lagrangian],
            out_dir: dir.path().join("sweep"),
        };
        let manifest = run_sweep(&spec).unwrap();
        assert_eq!(manifest.runs.len(), 4);
        for run in &manifest.runs {
            assert_eq!(run.status, "ok", "{:?}", run.error);
            let metrics = load_metrics(&spec.out_dir.join(&run.metrics)).unwrap();
            assert_eq!(metrics.epochs.len(), 2);
            let ckpts = spec.out_dir.join(&run.run_dir).join("checkpoints");
            assert!(ckpts.join("epoch_0001.json").exists());
        }
        let reloaded = SweepManifest::load(&spec.out_dir.join("manifest.json")).unwrap();
        assert_eq!(reloaded.runs.len(), 4);
    }

    #[test]
    fn rerun_with_identical_spec_reproduces_metric_values() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |sub: &str| SweepSpec {
            config: tiny_config(0),
            seeds: vec![3],
            arms: vec![OptimizerArm::Lbsgd],
            out_dir: dir.path().join(sub),
        };
        run_sweep(&mk("a")).unwrap();
        run_sweep(&mk("b")).unwrap();
        let a = load_metrics(&dir.path().join("a/lbsgd_seed003/metrics.jsonl")).unwrap();
        let b = load_metrics(&dir.path().join("b/lbsgd_seed003/metrics.jsonl")).unwrap();
        assert!(a.values_equal(&b));
    }

    #[test]
    fn duplicate_seeds_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SweepSpec {
            config: tiny_config(0),
            seeds: vec![1, 1],
            arms: vec![OptimizerArm::Lbsgd],
            out_dir: dir.path().to_path_buf(),
        };
        assert!(run_sweep(&spec).is_err());
    }

    #[test]
    fn failing_run_is_recorded_and_sweep_continues() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(0);
        // an impossible data requirement makes the model fit fail
        cfg.model.min_transitions = 1_000_000;
        let spec = SweepSpec {
            config: cfg,
            seeds: vec![0, 1],
            arms: vec![OptimizerArm::Lbsgd],
            out_dir: dir.path().join("sweep"),
        };
        let manifest = run_sweep(&spec).unwrap();
        assert_eq!(manifest.runs.len(), 2);
        assert!(manifest.runs.iter().all(|r| r.status == "failed"));
        assert!(manifest.runs.iter().all(|r| r.error.is_some()));
    }

    #[test]
    fn checkpoints_keep_last_three_plus_best() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(0);
        cfg.epochs = 6;
        // collect/fit-only epochs: this exercises checkpoint pruning, not
        // policy improvement
        cfg.warmup_epochs = 6;
        run_single(&cfg, OptimizerArm::Lbsgd, 0, dir.path()).unwrap();
        let ckpts = dir.path().join("checkpoints");
        let mut names: Vec<String> = std::fs::read_dir(&ckpts)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        let epoch_files: Vec<&String> =
            names.iter().filter(|n| n.starts_with("epoch_")).collect();
        assert_eq!(epoch_files.len(), CHECKPOINT_KEEP_LAST);
        assert_eq!(epoch_files[0], "epoch_0003.json");
        assert!(names.contains(&"best.json".to_string()));
        let best = Checkpoint::load(&ckpts.join("best.json")).unwrap();
        assert!(best.epoch < 6);
    }
}
