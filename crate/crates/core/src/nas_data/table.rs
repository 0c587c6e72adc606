use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::search_space::{validate, CellGraph, SearchSpaceDef};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "higher")]
    HigherBetter,
    #[serde(rename = "lower")]
    LowerBetter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchPerfPair {
    pub arch: CellGraph,
    pub score: f64,
}

/// Parameters of a z-score normalization, kept so raw scores can be
/// recovered: `raw = sign * z * stddev + mean`, `sign = -1` for tables that
/// were lower-better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub stddev: f64,
    pub original_direction: Direction,
}

impl Normalization {
    pub fn invert(&self, z: f64) -> f64 {
        let sign = match self.original_direction {
            Direction::HigherBetter => 1.0,
            Direction::LowerBetter => -1.0,
        };
        sign * z * self.stddev + self.mean
    }
}

/// Architecture/performance pairs for one NAS task.
#[derive(Debug, Clone)]
pub struct TaskTable {
    task_id: String,
    space: Arc<SearchSpaceDef>,
    metric_name: String,
    direction: Direction,
    records: Vec<ArchPerfPair>,
    digests: Vec<String>,
    normalization: Option<Normalization>,
}

impl TaskTable {
    /// Validates every architecture against `space` and rejects non-finite
    /// scores and duplicate digests.
    pub fn new(
        task_id: impl Into<String>,
        space: Arc<SearchSpaceDef>,
        metric_name: impl Into<String>,
        direction: Direction,
        records: Vec<ArchPerfPair>,
    ) -> Result<Self> {
        let task_id = task_id.into();
        let mut seen = HashSet::with_capacity(records.len());
        let mut digests = Vec::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            let fail = |detail: String| Error::Record {
                path: task_id.clone(),
                record: i,
                detail,
            };
            if !rec.score.is_finite() {
                return Err(fail(format!("score {} is not finite", rec.score)));
            }
            let violations = validate(&rec.arch, &space);
            if !violations.is_empty() {
                let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                return Err(fail(format!("invalid architecture: {}", list.join("; "))));
            }
            let digest = rec.arch.digest();
            if !seen.insert(digest.clone()) {
                return Err(fail(format!("duplicate architecture {digest}")));
            }
            digests.push(digest);
        }
        Ok(TaskTable {
            task_id,
            space,
            metric_name: metric_name.into(),
            direction,
            records,
            digests,
            normalization: None,
        })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn space(&self) -> &Arc<SearchSpaceDef> {
        &self.space
    }

    pub fn metric_name(&self) -> &str {
        &self.metric_name
    }

    /// Direction of the stored scores; always higher-better once normalized.
    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn records(&self) -> &[ArchPerfPair] {
        &self.records
    }

    pub fn digests(&self) -> &[String] {
        &self.digests
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score).collect()
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization.is_some()
    }

    pub(crate) fn set_normalization(&mut self, n: Option<Normalization>) {
        self.normalization = n;
    }

    /// Same architectures, new id and scores. Records and digests are reused
    /// without revalidation.
    pub fn with_scores(&self, task_id: impl Into<String>, scores: Vec<f64>) -> Result<TaskTable> {
        if scores.len() != self.records.len() {
            return Err(Error::Dimension(format!(
                "{} scores for {} records",
                scores.len(),
                self.records.len()
            )));
        }
        let task_id = task_id.into();
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Record {
                path: task_id,
                record: i,
                detail: "score is not finite".into(),
            });
        }
        let records = self
            .records
            .iter()
            .zip(scores)
            .map(|(r, score)| ArchPerfPair {
                arch: r.arch.clone(),
                score,
            })
            .collect();
        Ok(TaskTable {
            task_id,
            space: self.space.clone(),
            metric_name: self.metric_name.clone(),
            direction: self.direction,
            records,
            digests: self.digests.clone(),
            normalization: self.normalization,
        })
    }

    /// The records at `indices`, in that order, as a new table.
    pub fn subset(&self, task_id: impl Into<String>, indices: &[usize]) -> Result<TaskTable> {
        let mut records = Vec::with_capacity(indices.len());
        let mut digests = Vec::with_capacity(indices.len());
        let mut seen = HashSet::new();
        for &i in indices {
            let rec = self
                .records
                .get(i)
                .ok_or_else(|| Error::Size(format!("record index {i} out of range")))?;
            if !seen.insert(i) {
                return Err(Error::Input(format!("record index {i} repeated")));
            }
            records.push(rec.clone());
            digests.push(self.digests[i].clone());
        }
        Ok(TaskTable {
            task_id: task_id.into(),
            space: self.space.clone(),
            metric_name: self.metric_name.clone(),
            direction: self.direction,
            records,
            digests,
            normalization: self.normalization,
        })
    }
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Replaces scores by z-scores (population stddev), negated for lower-better
/// tables so that larger is always better.
///
/// Normalizing an already normalized table re-standardizes the scores and
/// keeps the original normalization record.
pub fn normalize_scores(table: &TaskTable) -> Result<TaskTable> {
    if table.len() < 2 {
        return Err(Error::Size(format!(
            "task `{}` needs at least 2 records to normalize",
            table.task_id
        )));
    }
    let scores = table.scores();
    let (mean, stddev) = moments(&scores);
    if !(stddev > 0.0) {
        return Err(Error::Degenerate(table.task_id.clone()));
    }
    let sign = match table.direction {
        Direction::HigherBetter => 1.0,
        Direction::LowerBetter => -1.0,
    };
    let z: Vec<f64> = scores.iter().map(|s| sign * (s - mean) / stddev).collect();
    let mut out = table.with_scores(table.task_id.clone(), z)?;
    out.direction = Direction::HigherBetter;
    out.normalization = Some(table.normalization.unwrap_or(Normalization {
        mean,
        stddev,
        original_direction: table.direction,
    }));
    Ok(out)
}

/// Disjoint fine-tuning (support) and validation (query) samples of one task.
#[derive(Debug, Clone)]
pub struct SupportQuerySplit {
    pub support: Vec<ArchPerfPair>,
    pub query: Vec<ArchPerfPair>,
}

/// Index form of a split; the first `n_finetune` sampled indices form the
/// support.
pub fn split_indices<R: Rng + ?Sized>(
    len: usize,
    n_finetune: usize,
    n_val: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let need = n_finetune + n_val;
    if need > len {
        return Err(Error::Size(format!(
            "split needs {n_finetune} + {n_val} records, table has {len}"
        )));
    }
    let mut picked = index::sample(rng, len, need).into_vec();
    let query = picked.split_off(n_finetune);
    Ok((picked, query))
}

/// Samples `n_finetune + n_val` distinct records uniformly without
/// replacement.
pub fn split_support_query<R: Rng + ?Sized>(
    table: &TaskTable,
    n_finetune: usize,
    n_val: usize,
    rng: &mut R,
) -> Result<SupportQuerySplit> {
    let (s, q) = split_indices(table.len(), n_finetune, n_val, rng)?;
    let take = |idx: &[usize]| idx.iter().map(|&i| table.records[i].clone()).collect();
    Ok(SupportQuerySplit {
        support: take(&s),
        query: take(&q),
    })
}

fn sigma_tag(sigma: f64) -> String {
    format!("{sigma}")
}

/// Adds frozen i.i.d. `Normal(0, sigma^2)` noise to every score of a
/// normalized table. The new id is `<base>~noise(sigma=<s>,seed=<seed>)`.
pub fn make_noise_task(base: &TaskTable, sigma: f64, noise_seed: u64) -> Result<TaskTable> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!(
            "noise sigma must be >= 0, got {sigma}"
        )));
    }
    if !base.is_normalized() {
        return Err(Error::Domain(format!(
            "noise tasks are built from normalized tables; `{}` is raw",
            base.task_id
        )));
    }
    let id = format!(
        "{}~noise(sigma={},seed={noise_seed})",
        base.task_id,
        sigma_tag(sigma)
    );
    let scores = if sigma == 0.0 {
        base.scores()
    } else {
        let normal = Normal::new(0.0, sigma).expect("sigma validated");
        let mut rng = seed::rng(noise_seed);
        base.records
            .iter()
            .map(|r| r.score + normal.sample(&mut rng))
            .collect()
    };
    base.with_scores(id, scores)
}

/// Scores replaced by i.i.d. standard normal draws, independent of the base.
pub fn make_pure_noise_task(base: &TaskTable, noise_seed: u64) -> Result<TaskTable> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = seed::rng(noise_seed);
    let scores = (0..base.len()).map(|_| normal.sample(&mut rng)).collect();
    let mut out = base.with_scores(
        format!("{}~pure-noise(seed={noise_seed})", base.task_id),
        scores,
    )?;
    out.direction = Direction::HigherBetter;
    Ok(out)
}

/// The meta-training set of tasks.
#[derive(Debug, Clone, Default)]
pub struct TaskCollection {
    tables: Vec<TaskTable>,
}

impl TaskCollection {
    pub fn new(tables: Vec<TaskTable>) -> Result<Self> {
        let mut ids = HashSet::new();
        for t in &tables {
            if !ids.insert(t.task_id.clone()) {
                return Err(Error::Input(format!("duplicate task id `{}`", t.task_id)));
            }
        }
        Ok(TaskCollection { tables })
    }

    pub fn tables(&self) -> &[TaskTable] {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn get(&self, task_id: &str) -> Option<&TaskTable> {
        self.tables.iter().find(|t| t.task_id == task_id)
    }

    /// All tables except `task_id`.
    pub fn without(&self, task_id: &str) -> TaskCollection {
        TaskCollection {
            tables: self
                .tables
                .iter()
                .filter(|t| t.task_id != task_id)
                .cloned()
                .collect(),
        }
    }
}
