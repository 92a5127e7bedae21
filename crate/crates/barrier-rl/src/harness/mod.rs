//! Experiment orchestration: configs, metrics persistence, multi-seed
//! sweeps, report generation, optimizer-only benchmarks, and the CLI.

pub mod benchopt;
pub mod cli;
pub mod config;
pub mod metrics;
pub mod report;
pub mod sweep;
mod svg;

pub use benchopt::{bench_opt, BenchOptOutcome, BenchOptSpec};
pub use config::TrainConfig;
pub use metrics::{load_metrics, EpochRecord, MetricsWriter, RunHeader, RunMetricsFile};
pub use report::{report, ReportBundle};
pub use sweep::{run_single, run_sweep, RunEntry, SweepManifest, SweepSpec};
