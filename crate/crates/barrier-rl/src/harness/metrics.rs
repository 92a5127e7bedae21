//! Metrics persistence: append-only line-delimited JSON, one self-describing
//! record per line. The first line is the run header; every later line is an
//! epoch record. A truncated final line is tolerated on load.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::EpochStats;
use crate::error::{Error, Result};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    /// FNV-1a of the canonical config serialization, hex.
    pub config_hash: String,
    pub seed: u64,
    pub arm: String,
    /// Episode budget after prorating to the actual horizon.
    pub d_scaled: f64,
    pub horizon: usize,
    pub eval_episodes: usize,
    /// Wall-clock start (unix seconds). Excluded from determinism checks.
    pub start_time_unix_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub env_steps: u64,
    pub j_hat: f64,
    pub jc_hat: f64,
    pub accumulated_cost: f64,
    pub eta: Option<f64>,
    pub violations: u64,
    pub episodes_over_budget: u64,
    pub model_jc: Option<f64>,
    /// Excluded from determinism checks.
    pub wall_time_s: f64,
    pub aborted: bool,
}

impl EpochRecord {
    pub fn from_stats(s: &EpochStats) -> Self {
        EpochRecord {
            epoch: s.epoch,
            env_steps: s.env_steps,
            j_hat: s.j_hat,
            jc_hat: s.jc_hat,
            accumulated_cost: s.accumulated_cost,
            eta: s.eta,
            violations: s.violations,
            episodes_over_budget: s.episodes_over_budget,
            model_jc: s.model_jc,
            wall_time_s: s.wall_time_s,
            aborted: s.aborted,
        }
    }

    /// Bit-level equality on experiment values, ignoring wall time.
    pub fn values_equal(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.env_steps == other.env_steps
            && self.j_hat.to_bits() == other.j_hat.to_bits()
            && self.jc_hat.to_bits() == other.jc_hat.to_bits()
            && self.accumulated_cost.to_bits() == other.accumulated_cost.to_bits()
            && opt_bits(self.eta) == opt_bits(other.eta)
            && self.violations == other.violations
            && self.episodes_over_budget == other.episodes_over_budget
            && opt_bits(self.model_jc) == opt_bits(other.model_jc)
            && self.aborted == other.aborted
    }
}

fn opt_bits(v: Option<f64>) -> Option<u64> {
    v.map(f64::to_bits)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum MetricsLine {
    Header(RunHeader),
    Epoch(EpochRecord),
}

pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    /// Create (truncate) a metrics file and write the header line.
    pub fn create(path: &Path, header: &RunHeader) -> Result<Self> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        let mut w = MetricsWriter { out: BufWriter::new(file) };
        w.write_line(&MetricsLine::Header(header.clone()))?;
        Ok(w)
    }

    pub fn write_epoch(&mut self, record: &EpochRecord) -> Result<()> {
        self.write_line(&MetricsLine::Epoch(record.clone()))
    }

    fn write_line(&mut self, line: &MetricsLine) -> Result<()> {
        let json = serde_json::to_string(line)
            .map_err(|e| Error::Config(format!("metrics serialize: {e}")))?;
        writeln!(self.out, "{json}")?;
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunMetricsFile {
    pub header: RunHeader,
    pub epochs: Vec<EpochRecord>,
}

impl RunMetricsFile {
    /// Bit-level equality on values (header timing and wall times ignored).
    pub fn values_equal(&self, other: &Self) -> bool {
        self.header.config_hash == other.header.config_hash
            && self.header.seed == other.header.seed
            && self.header.arm == other.header.arm
            && self.header.d_scaled.to_bits() == other.header.d_scaled.to_bits()
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| a.values_equal(b))
    }
}

/// Load a metrics file. Every complete line must parse; a trailing partial
/// line (crash during a write) is dropped.
pub fn load_metrics(path: &Path) -> Result<RunMetricsFile> {
    let file = File::open(path)
        .map_err(|e| Error::Config(format!("metrics file `{}`: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut header: Option<RunHeader> = None;
    let mut epochs = Vec::new();
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    let count = lines.len();
    for (i, line) in lines.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<MetricsLine>(&line) {
            Ok(MetricsLine::Header(h)) => {
                if header.is_some() {
                    return Err(Error::Config("duplicate metrics header".into()));
                }
                header = Some(h);
            }
            Ok(MetricsLine::Epoch(e)) => epochs.push(e),
            Err(err) => {
                if i + 1 == count {
                    break; // tolerated: truncated final line
                }
                return Err(Error::Config(format!(
                    "metrics line {} unparseable: {err}",
                    i + 1
                )));
            }
        }
    }
    let header = header.ok_or_else(|| Error::Config("metrics file has no header".into()))?;
    Ok(RunMetricsFile { header, epochs })
}

pub fn now_unix_s() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> RunHeader {
        RunHeader {
            schema_version: METRICS_SCHEMA_VERSION,
            config_hash: "deadbeef".into(),
            seed: 3,
            arm: "lbsgd".into(),
            d_scaled: 5.0,
            horizon: 200,
            eval_episodes: 10,
            start_time_unix_s: 0.0,
        }
    }

    fn record(epoch: usize) -> EpochRecord {
        EpochRecord {
            epoch,
            env_steps: (epoch as u64 + 1) * 400,
            j_hat: 1.5 + epoch as f64,
            jc_hat: 0.25,
            accumulated_cost: epoch as f64 * 2.0,
            eta: Some(0.1),
            violations: 0,
            episodes_over_budget: 0,
            model_jc: Some(-0.2),
            wall_time_s: 1.0,
            aborted: false,
        }
    }

    #[test]
    fn roundtrip_and_append_only_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let mut w = MetricsWriter::create(&path, &header()).unwrap();
        for e in 0..3 {
            w.write_epoch(&record(e)).unwrap();
        }
        drop(w);
        let loaded = load_metrics(&path).unwrap();
        assert_eq!(loaded.header, header());
        assert_eq!(loaded.epochs.len(), 3);
        assert!(loaded.epochs[2].values_equal(&record(2)));
        // one JSON object per line, self-describing
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().next().unwrap().contains("\"type\":\"header\""));
    }

    #[test]
    fn truncated_final_line_is_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let mut w = MetricsWriter::create(&path, &header()).unwrap();
        w.write_epoch(&record(0)).unwrap();
        drop(w);
        // simulate a crash mid-write
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"type\":\"epoch\",\"epoch\":1,\"env_st");
        std::fs::write(&path, text).unwrap();
        let loaded = load_metrics(&path).unwrap();
        assert_eq!(loaded.epochs.len(), 1);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let mut w = MetricsWriter::create(&path, &header()).unwrap();
        w.write_epoch(&record(0)).unwrap();
        drop(w);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let corrupted = "{\"type\":\"epoch\",bogus";
        lines.insert(1, corrupted);
        std::fs::write(&path, lines.join("\n")).unwrap();
        assert!(load_metrics(&path).is_err());
    }

    #[test]
    fn wall_time_is_ignored_by_value_comparison() {
        let a = record(0);
        let mut b = record(0);
        b.wall_time_s = 99.0;
        assert!(a.values_equal(&b));
        b.j_hat += 1e-15;
        assert!(!a.values_equal(&b));
    }
}
