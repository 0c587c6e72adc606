use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::mean_stderr;

/// First 16 hex digits of the sha256 of the decimal seed list.
pub fn seed_hash(seeds: &[u64]) -> String {
    let text = seeds
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(",");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Mean and standard error of per-run Spearman values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub mean: f64,
    pub stderr: f64,
    pub runs: usize,
    /// Set when `runs == 1` and the standard error is 0 by convention.
    pub single_run: bool,
    pub per_run: Vec<f64>,
}

impl RunStats {
    pub fn from_runs(per_run: Vec<f64>) -> Self {
        let (mean, stderr) = mean_stderr(&per_run);
        RunStats {
            mean,
            stderr,
            runs: per_run.len(),
            single_run: per_run.len() == 1,
            per_run,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub target: String,
    #[serde(flatten)]
    pub stats: RunStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub rows: Vec<EvalRow>,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let hash = seed_hash(&self.seeds);
        let mut out = String::from("target,mean,stderr,runs,seed_hash\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{hash}",
                csv_field(&r.target),
                r.stats.mean,
                r.stats.stderr,
                r.stats.runs
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: f64,
    /// The grid value that produced this point (equal to `x` unless the
    /// axis is a measured quantity).
    pub param: f64,
    #[serde(flatten)]
    pub stats: RunStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<RunStats>,
}

/// A curve of mean Spearman against a swept quantity; `x` strictly
/// increases along `points`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub name: String,
    pub x_label: String,
    pub points: Vec<SweepPoint>,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
}

impl SweepCurve {
    pub fn to_csv(&self) -> String {
        let hash = seed_hash(&self.seeds);
        let mut out = format!(
            "{},param,mean,stderr,runs,baseline_mean,baseline_stderr,seed_hash\n",
            self.x_label
        );
        for p in &self.points {
            let (bm, bs) = p
                .baseline
                .as_ref()
                .map(|b| (b.mean.to_string(), b.stderr.to_string()))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{bm},{bs},{hash}",
                p.x, p.param, p.stats.mean, p.stats.stderr, p.stats.runs
            );
        }
        out
    }

    /// Points in grid order (ascending `param`).
    pub fn by_param(&self) -> Vec<&SweepPoint> {
        let mut v: Vec<_> = self.points.iter().collect();
        v.sort_by(|a, b| a.param.total_cmp(&b.param));
        v
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
