use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;

use crate::nas_data::{normalize_scores, SyntheticObjective, TaskTable};
use crate::search_space::CellGraph;
use crate::{Error, Result};

/// Spaces up to this size are enumerated to rank search results exactly.
pub const ENUMERATION_LIMIT: u64 = 2_000_000;

type ScoreFn = Box<dyn Fn(&CellGraph) -> Result<f64> + Send + Sync>;

enum Backend {
    Table {
        scores: HashMap<String, f64>,
        cells: Vec<CellGraph>,
    },
    Synthetic(SyntheticObjective),
    Function {
        f: ScoreFn,
        cache: Mutex<HashMap<String, f64>>,
    },
}

/// Black-box architecture evaluator with a call counter. Scores are
/// higher-better.
pub struct Oracle {
    name: String,
    backend: Backend,
    calls: u64,
    /// Every score of the evaluable universe, descending.
    ground_truth: Option<Vec<f64>>,
}

impl fmt::Debug for Oracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Oracle")
            .field("name", &self.name)
            .field("calls", &self.calls)
            .field("enumerable", &self.ground_truth.is_some())
            .finish()
    }
}

fn descending(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Lookup oracle over a task table. Raw tables are z-scored first, so the
/// served scores are always normalized and higher-better.
pub fn tabular_oracle(table: &TaskTable) -> Result<Oracle> {
    let table = if table.is_normalized() {
        table.clone()
    } else {
        normalize_scores(table)?
    };
    let scores: HashMap<String, f64> = table
        .digests()
        .iter()
        .cloned()
        .zip(table.records().iter().map(|r| r.score))
        .collect();
    let cells = table.records().iter().map(|r| r.arch.clone()).collect();
    Ok(Oracle {
        name: format!("table:{}", table.task_id()),
        ground_truth: Some(descending(table.scores())),
        backend: Backend::Table { scores, cells },
        calls: 0,
    })
}

/// Oracle over a synthetic objective; its space is enumerated for exact
/// percentiles when it has at most [`ENUMERATION_LIMIT`] cells.
pub fn synthetic_oracle(objective: SyntheticObjective) -> Result<Oracle> {
    let space = objective.space().clone();
    let enumerable = space
        .count()
        .ok()
        .and_then(|c| u64::try_from(c).ok())
        .is_some_and(|c| c <= ENUMERATION_LIMIT);
    let ground_truth = if enumerable {
        let scores = space
            .enumerate()?
            .map(|c| objective.score(&c))
            .collect::<Result<Vec<_>>>()?;
        Some(descending(scores))
    } else {
        None
    };
    Ok(Oracle {
        name: format!("synthetic:{}", space.name()),
        backend: Backend::Synthetic(objective),
        calls: 0,
        ground_truth,
    })
}

impl Oracle {
    /// Oracle backed by an arbitrary function; repeated digests are served
    /// from a cache. `ground_truth` lists every score of the universe.
    pub fn from_fn(
        name: impl Into<String>,
        f: impl Fn(&CellGraph) -> Result<f64> + Send + Sync + 'static,
        ground_truth: Option<Vec<f64>>,
    ) -> Self {
        Oracle {
            name: name.into(),
            backend: Backend::Function {
                f: Box::new(f),
                cache: Mutex::new(HashMap::new()),
            },
            calls: 0,
            ground_truth: ground_truth.map(descending),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Evaluations so far, failed ones included.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn evaluate(&mut self, cell: &CellGraph) -> Result<f64> {
        self.calls += 1;
        match &self.backend {
            Backend::Table { scores, .. } => {
                let digest = cell.digest();
                scores.get(&digest).copied().ok_or_else(|| {
                    Error::UnknownArchitecture(format!("{digest} is not in {}", self.name))
                })
            }
            Backend::Synthetic(obj) => obj.score(cell),
            Backend::Function { f, cache } => {
                let digest = cell.digest();
                if let Some(&s) = cache.lock().expect("cache lock").get(&digest) {
                    return Ok(s);
                }
                let s = f(cell)?;
                if !s.is_finite() {
                    return Err(Error::Domain(format!("oracle returned {s} for {digest}")));
                }
                cache.lock().expect("cache lock").insert(digest, s);
                Ok(s)
            }
        }
    }

    /// Architectures the oracle can score when that is a finite list (tables).
    pub fn covered_cells(&self) -> Option<&[CellGraph]> {
        match &self.backend {
            Backend::Table { cells, .. } => Some(cells),
            _ => None,
        }
    }

    pub fn is_enumerable(&self) -> bool {
        self.ground_truth.is_some()
    }

    /// Highest achievable score, when the universe is enumerable.
    pub fn best_score(&self) -> Option<f64> {
        self.ground_truth.as_ref().and_then(|g| g.first().copied())
    }

    /// Fraction of the universe scoring strictly better than `score`.
    pub fn percentile(&self, score: f64) -> Option<f64> {
        let g = self.ground_truth.as_ref()?;
        let better = g.partition_point(|&s| s > score);
        Some(better as f64 / g.len() as f64)
    }
}
