//! A miniature seeds-by-arms sweep followed by report generation: metric
//! streams per run, a manifest, CSV tables, and SVG plots with the budget
//! line.
//!
//! Run with: cargo run --release --example sweep_and_report

use barrier_rl::agent::OptimizerArm;
use barrier_rl::harness::{report, run_sweep, SweepSpec, TrainConfig};

fn main() -> barrier_rl::Result<()> {
    let mut cfg = TrainConfig::default();
    // shrink the protocol so the example finishes in about a minute
    cfg.epochs = 8;
    cfg.warmup_epochs = 3;
    cfg.env.horizon = 100;
    cfg.model.initial_epochs = 6;
    cfg.model.initial_steps_per_epoch = 80;
    cfg.imagination_batch = 64;

    let out_dir = std::env::temp_dir().join("barrier-rl-sweep-example");
    let _ = std::fs::remove_dir_all(&out_dir);

    let manifest = run_sweep(&SweepSpec {
        config: cfg,
        seeds: vec![0, 1],
        arms: vec![OptimizerArm::Lbsgd, OptimizerArm::Lagrangian],
        out_dir: out_dir.clone(),
    })?;
    for run in &manifest.runs {
        println!("run {:<22} -> {}", run.run_dir, run.status);
    }

    let bundle = report(&out_dir.join("manifest.json"), &out_dir.join("report"))?;
    println!("\naccumulated training cost (mean +/- population std across seeds):");
    for row in &bundle.summary {
        println!(
            "  {:<12} {:8.1} +/- {:.1}   (median {:.1}, model violations {})",
            row.arm, row.final_cost_mean, row.final_cost_std, row.final_cost_median, row.total_violations
        );
    }
    println!("\nbudget line d_scaled = {}", bundle.d_scaled);
    println!("report bundle written to {}", out_dir.join("report").display());
    Ok(())
}
