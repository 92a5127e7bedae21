//! Command-line interface. The `barrier-rl` binary is a thin wrapper around
//! [`run`]; every subcommand shares the `--config`, `--seed`, and `--out`
//! flags. The `BARRIER_RL_OUT_ROOT` environment variable (the only
//! environment override) re-roots relative output paths.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use super::benchopt::{bench_opt, BenchOptSpec};
use super::config::TrainConfig;
use super::report::report;
use super::sweep::{run_single, run_sweep, Checkpoint, SweepSpec};
use crate::agent::{evaluate, OptimizerArm};
use crate::error::{Error, Result};

pub const OUT_ROOT_ENV: &str = "BARRIER_RL_OUT_ROOT";

#[derive(Parser, Debug)]
#[command(
    name = "barrier-rl",
    version,
    about = "Safe model-based RL on constrained MDPs: pessimistic ensembles + log-barrier policy improvement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One training run from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Overrides the config's optimizer arm (lbsgd | lagrangian).
        #[arg(long)]
        optimizer: Option<String>,
    },
    /// Seeds x arms sweep; each run gets its own directory under --out.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "lbsgd,lagrangian")]
        arms: Vec<String>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint: fixed policy, mean-mode actions.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Optimizer-only run on an analytic problem, with a feasibility ledger.
    BenchOpt {
        /// ball-projection | linear-cut | noisy-quadratic
        #[arg(long)]
        problem: String,
        #[arg(long, default_value = "lbsgd")]
        optimizer: String,
        /// Evaluation-noise scale on values and gradients.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for ledger.jsonl and iterates.csv (optional).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate a sweep manifest into tables and plots.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

/// Re-root a relative path under `BARRIER_RL_OUT_ROOT` when set.
fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

/// Entry point used by the binary and by tests. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out, optimizer } => {
            let cfg = TrainConfig::load(&config)?;
            let arm = match optimizer {
                Some(s) => OptimizerArm::parse(&s)?,
                None => OptimizerArm::parse(&cfg.optimizer)?,
            };
            let seed = seed.unwrap_or(cfg.seed);
            let out = resolve_out(&out);
            let run_dir = out.join(format!("{}_seed{:03}", arm.name(), seed));
            run_single(&cfg, arm, seed, &run_dir)?;
            println!("run complete: {}", run_dir.join("metrics.jsonl").display());
            Ok(())
        }
        Command::Sweep { config, seeds, arms, out } => {
            let cfg = TrainConfig::load(&config)?;
            let arms: Vec<OptimizerArm> =
                arms.iter().map(|s| OptimizerArm::parse(s)).collect::<Result<_>>()?;
            let out_dir = resolve_out(&out);
            let manifest = run_sweep(&SweepSpec { config: cfg, seeds, arms, out_dir: out_dir.clone() })?;
            let failed = manifest.runs.iter().filter(|r| r.status != "ok").count();
            println!(
                "sweep complete: {} runs ({failed} failed), manifest at {}",
                manifest.runs.len(),
                out_dir.join("manifest.json").display()
            );
            Ok(())
        }
        Command::Evaluate { checkpoint, config, episodes, seed } => {
            let cfg = TrainConfig::load(&config)?;
            let env = cfg.build_env()?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let (j_hat, jc_hat) = evaluate(&env, &ckpt.policy, episodes, seed)?;
            println!(
                "epoch={} episodes={episodes} J_hat={j_hat} Jc_hat={jc_hat} budget={}",
                ckpt.epoch,
                cfg.d_scaled()
            );
            Ok(())
        }
        Command::BenchOpt { problem, optimizer, noise, seed, out } => {
            let spec = BenchOptSpec {
                problem,
                optimizer: OptimizerArm::parse(&optimizer)?,
                noise_scale: noise,
                seed,
                ..Default::default()
            };
            let outcome = bench_opt(&spec)?;
            if let Some(dir) = out {
                let dir = resolve_out(&dir);
                std::fs::create_dir_all(&dir)?;
                let mut buf = Vec::new();
                for entry in &outcome.ledger {
                    let line = serde_json::to_string(entry)
                        .map_err(|e| Error::Config(format!("ledger serialize: {e}")))?;
                    buf.extend_from_slice(line.as_bytes());
                    buf.push(b'\n');
                }
                std::fs::write(dir.join("ledger.jsonl"), buf)?;
                let mut csv = String::from("step,x0,x1\n");
                for (i, x) in outcome.iterates.iter().enumerate() {
                    csv.push_str(&format!("{i},{},{}\n", x[0], x[1]));
                }
                std::fs::write(dir.join("iterates.csv"), csv)?;
            }
            println!(
                "problem={} optimizer={} noise={} final=({}, {}) error={:.6} true_violations={} steps={}",
                outcome.problem,
                outcome.optimizer,
                outcome.noise_scale,
                outcome.final_point[0],
                outcome.final_point[1],
                outcome.final_error,
                outcome.true_violations,
                outcome.steps
            );
            Ok(())
        }
        Command::Report { manifest, out } => {
            let out_dir = resolve_out(&out);
            let bundle = report(&manifest, &out_dir)?;
            for row in &bundle.summary {
                println!(
                    "{}: runs={} final_cost mean={:.3} std={:.3} median={:.3}",
                    row.arm, row.runs, row.final_cost_mean, row.final_cost_std, row.final_cost_median
                );
            }
            println!("report written to {}", out_dir.display());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> i32 {
        run(std::iter::once("barrier-rl").chain(args.iter().copied()))
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(cli(&["frobnicate"]), 2);
        assert_eq!(cli(&["train", "--config", "x.toml", "--bogus-flag"]), 2);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(cli(&["--help"]), 0);
    }

    #[test]
    fn missing_config_path_fails_with_diagnostic() {
        assert_eq!(cli(&["train", "--config", "/definitely/not/here.toml"]), 1);
    }

    #[test]
    fn bench_opt_smoke() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("bench");
        let code = cli(&[
            "bench-opt",
            "--problem",
            "linear-cut",
            "--optimizer",
            "lbsgd",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        assert!(out.join("ledger.jsonl").exists());
        assert!(out.join("iterates.csv").exists());
    }

    #[test]
    fn out_root_env_reroots_relative_paths() {
        // resolve_out reads the env var directly; exercise both branches.
        // (set_var is process-global, so restore immediately.)
        let dir = tempfile::tempdir().unwrap();
        unsafe { std::env::set_var(OUT_ROOT_ENV, dir.path()) };
        let resolved = resolve_out(Path::new("runs"));
        unsafe { std::env::remove_var(OUT_ROOT_ENV) };
        assert_eq!(resolved, dir.path().join("runs"));
        assert_eq!(resolve_out(Path::new("/abs/path")), PathBuf::from("/abs/path"));
    }
}
