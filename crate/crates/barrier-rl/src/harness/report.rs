//! Report generation over a sweep manifest: the accumulated-cost summary per
//! arm (mean and population std of the final accumulated training cost) and
//! per-epoch learning curves (median and population std across seeds) with
//! the budget line. Outputs are CSV tables plus static SVG plots, and are a
//! pure function of the metric files: re-running is byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use super::metrics::{load_metrics, RunMetricsFile};
use super::svg;
use super::sweep::SweepManifest;
use crate::error::{Error, Result};

/// Population standard deviation (documented convention for every aggregate
/// in the report).
pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaNs in metrics"));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmSummary {
    pub arm: String,
    pub runs: usize,
    pub final_cost_mean: f64,
    pub final_cost_std: f64,
    pub final_cost_median: f64,
    pub total_violations: u64,
}

#[derive(Clone, Debug)]
pub struct CurvePoint {
    pub epoch: usize,
    pub j_median: f64,
    pub j_std: f64,
    pub jc_median: f64,
    pub jc_std: f64,
}

#[derive(Clone, Debug)]
pub struct ReportBundle {
    /// One row per arm, ordered by ascending mean final accumulated cost.
    pub summary: Vec<ArmSummary>,
    /// Per-arm learning curves (key: arm name).
    pub curves: BTreeMap<String, Vec<CurvePoint>>,
    /// Budget line drawn on the constraint curve.
    pub d_scaled: f64,
    pub eval_episodes: usize,
}

/// Build the report from a sweep manifest and write the bundle into `out_dir`.
pub fn report(manifest_path: &Path, out_dir: &Path) -> Result<ReportBundle> {
    let manifest = SweepManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut by_arm: BTreeMap<String, Vec<RunMetricsFile>> = BTreeMap::new();
    for run in &manifest.runs {
        if run.status != "ok" {
            continue;
        }
        let metrics = load_metrics(&base.join(&run.metrics))?;
        by_arm.entry(run.arm.clone()).or_default().push(metrics);
    }
    if by_arm.is_empty() {
        return Err(Error::Config("manifest has no completed runs".into()));
    }
    // deterministic order within each arm
    for runs in by_arm.values_mut() {
        runs.sort_by_key(|r| r.header.seed);
    }

    let d_scaled = by_arm.values().next().expect("non-empty")[0].header.d_scaled;
    let eval_episodes = by_arm.values().next().expect("non-empty")[0].header.eval_episodes;

    let mut summary: Vec<ArmSummary> = Vec::new();
    let mut curves: BTreeMap<String, Vec<CurvePoint>> = BTreeMap::new();
    for (arm, runs) in &by_arm {
        let finals: Vec<f64> = runs
            .iter()
            .map(|r| r.epochs.last().map_or(0.0, |e| e.accumulated_cost))
            .collect();
        let total_violations = runs
            .iter()
            .map(|r| r.epochs.iter().map(|e| e.violations).sum::<u64>())
            .sum();
        summary.push(ArmSummary {
            arm: arm.clone(),
            runs: runs.len(),
            final_cost_mean: finals.iter().sum::<f64>() / finals.len() as f64,
            final_cost_std: population_std(&finals),
            final_cost_median: median(&finals),
            total_violations,
        });

        let max_epochs = runs.iter().map(|r| r.epochs.len()).min().unwrap_or(0);
        let mut pts = Vec::with_capacity(max_epochs);
        for e in 0..max_epochs {
            let js: Vec<f64> = runs.iter().map(|r| r.epochs[e].j_hat).collect();
            let jcs: Vec<f64> = runs.iter().map(|r| r.epochs[e].jc_hat).collect();
            pts.push(CurvePoint {
                epoch: e,
                j_median: median(&js),
                j_std: population_std(&js),
                jc_median: median(&jcs),
                jc_std: population_std(&jcs),
            });
        }
        curves.insert(arm.clone(), pts);
    }
    summary.sort_by(|a, b| {
        a.final_cost_mean
            .partial_cmp(&b.final_cost_mean)
            .expect("finite aggregates")
            .then_with(|| a.arm.cmp(&b.arm))
    });

    std::fs::create_dir_all(out_dir)?;
    write_summary_csv(&summary, &out_dir.join("accumulated_cost.csv"))?;
    for (arm, pts) in &curves {
        write_curves_csv(pts, &out_dir.join(format!("curves_{arm}.csv")))?;
    }
    write_report_txt(&summary, d_scaled, eval_episodes, &out_dir.join("report.txt"))?;
    write_plots(&summary, &curves, d_scaled, out_dir)?;

    Ok(ReportBundle { summary, curves, d_scaled, eval_episodes })
}

fn write_summary_csv(summary: &[ArmSummary], path: &Path) -> Result<()> {
    let mut text = String::from(
        "arm,runs,final_accumulated_cost_mean,final_accumulated_cost_std,final_accumulated_cost_median,total_model_violations\n",
    );
    for row in summary {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.arm,
            row.runs,
            row.final_cost_mean,
            row.final_cost_std,
            row.final_cost_median,
            row.total_violations
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_curves_csv(points: &[CurvePoint], path: &Path) -> Result<()> {
    let mut text = String::from("epoch,j_median,j_std,jc_median,jc_std\n");
    for p in points {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            p.epoch, p.j_median, p.j_std, p.jc_median, p.jc_std
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_report_txt(
    summary: &[ArmSummary],
    d_scaled: f64,
    eval_episodes: usize,
    path: &Path,
) -> Result<()> {
    let mut text = String::new();
    text.push_str("accumulated training cost by optimizer arm\n");
    text.push_str("conventions: std = population standard deviation; curves report the\n");
    text.push_str("median and std across seeds; evaluation fixes the policy for\n");
    text.push_str(&format!(
        "{eval_episodes} episodes per epoch; episode budget line d_scaled = {d_scaled}\n\n"
    ));
    for row in summary {
        text.push_str(&format!(
            "{:<12} runs={} final_cost mean={:.3} std={:.3} median={:.3} model_violations={}\n",
            row.arm,
            row.runs,
            row.final_cost_mean,
            row.final_cost_std,
            row.final_cost_median,
            row.total_violations
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_plots(
    summary: &[ArmSummary],
    curves: &BTreeMap<String, Vec<CurvePoint>>,
    d_scaled: f64,
    out_dir: &Path,
) -> Result<()> {
    let bars: Vec<(String, f64, f64)> = summary
        .iter()
        .map(|s| (s.arm.clone(), s.final_cost_mean, s.final_cost_std))
        .collect();
    std::fs::write(
        out_dir.join("accumulated_cost.svg"),
        svg::bar_chart("accumulated training cost (mean +/- std)", "cost", &bars),
    )?;

    let mk_series = |metric: &dyn Fn(&CurvePoint) -> (f64, f64)| -> Vec<svg::Series> {
        curves
            .iter()
            .enumerate()
            .map(|(i, (arm, pts))| svg::Series {
                label: arm.clone(),
                color: svg::PALETTE[i % svg::PALETTE.len()],
                points: pts
                    .iter()
                    .map(|p| (p.epoch as f64, metric(p).0))
                    .collect(),
                band: pts
                    .iter()
                    .map(|p| {
                        let (m, s) = metric(p);
                        (p.epoch as f64, m - s, m + s)
                    })
                    .collect(),
            })
            .collect()
    };
    std::fs::write(
        out_dir.join("objective_curve.svg"),
        svg::line_chart(
            "evaluation return (median +/- std over seeds)",
            "epoch",
            "J-hat",
            &mk_series(&|p| (p.j_median, p.j_std)),
            None,
        ),
    )?;
    std::fs::write(
        out_dir.join("constraint_curve.svg"),
        svg::line_chart(
            "evaluation episode cost (median +/- std over seeds)",
            "epoch",
            "Jc-hat",
            &mk_series(&|p| (p.jc_median, p.jc_std)),
            Some((d_scaled, "budget d_scaled")),
        ),
    )?;
    Ok(())
}
