use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use super::history::{Refit, SearchHistory};
use super::oracle::{Oracle, ENUMERATION_LIMIT};
use crate::meta_learner::{meta_test_finetune, Batch, MetaConfig};
use crate::predictor::{Gcn, GcnParams, Regressor};
use crate::search_space::{encode, sample_uniform, CellGraph, EncodedGraph, SearchSpaceDef};
use crate::{Error, Result};

const PREDICT_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub total_steps: usize,
    pub retrain_every: usize,
    pub candidates_per_step: usize,
    /// Drop candidates that were already evaluated.
    pub dedup: bool,
    /// Also draw distinct candidates within a step.
    pub dedup_all: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            total_steps: 20,
            retrain_every: 4,
            candidates_per_step: 10_000,
            dedup: true,
            dedup_all: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps < 1 || self.retrain_every < 1 || self.candidates_per_step < 1 {
            return Err(Error::Config(
                "total_steps, retrain_every and candidates_per_step must be >= 1".into(),
            ));
        }
        if self.dedup_all && !self.dedup {
            return Err(Error::Config("dedup_all requires dedup".into()));
        }
        Ok(())
    }
}

/// A search that stopped on an error, with everything recorded before it.
#[derive(Debug, ThisError)]
#[error("search aborted after {} evaluations: {error}", partial.len())]
pub struct SearchFailure {
    pub partial: SearchHistory,
    #[source]
    pub error: Error,
}

pub type SearchResult = std::result::Result<SearchHistory, Box<SearchFailure>>;

fn fail(partial: SearchHistory, error: Error) -> Box<SearchFailure> {
    Box::new(SearchFailure { partial, error })
}

/// The architectures a search may propose: the whole space, or the cells
/// the oracle covers when it is a finite table.
enum Universe<'a> {
    Space {
        space: &'a SearchSpaceDef,
        size: Option<u64>,
    },
    List(Vec<CellGraph>),
}

impl<'a> Universe<'a> {
    fn new(space: &'a SearchSpaceDef, oracle: &Oracle) -> Result<Self> {
        if space.num_slots().is_none() {
            return Err(Error::Unsupported(format!(
                "space `{}` cannot be sampled; search needs a slot template",
                space.name()
            )));
        }
        Ok(match oracle.covered_cells() {
            Some(cells) => Universe::List(cells.to_vec()),
            None => Universe::Space {
                space,
                size: space.count().ok().and_then(|c| u64::try_from(c).ok()),
            },
        })
    }

    fn size(&self) -> Option<u64> {
        match self {
            Universe::Space { size, .. } => *size,
            Universe::List(cells) => Some(cells.len() as u64),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CellGraph> {
        match self {
            Universe::Space { space, .. } => sample_uniform(space, rng),
            Universe::List(cells) => Ok(cells[rng.random_range(0..cells.len())].clone()),
        }
    }

    /// Every cell not in `skip`, in a fixed order; `None` when the universe
    /// is too large to list.
    fn remaining(&self, skip: &HashSet<String>) -> Result<Option<Vec<CellGraph>>> {
        match self {
            Universe::Space { space, size } => {
                if size.is_none_or(|s| s > ENUMERATION_LIMIT) {
                    return Ok(None);
                }
                Ok(Some(
                    space
                        .enumerate()?
                        .filter(|c| !skip.contains(&c.digest()))
                        .collect(),
                ))
            }
            Universe::List(cells) => Ok(Some(
                cells
                    .iter()
                    .filter(|c| !skip.contains(&c.digest()))
                    .cloned()
                    .collect(),
            )),
        }
    }

    fn remaining_count(&self, evaluated: usize) -> Option<u64> {
        self.size().map(|s| s.saturating_sub(evaluated as u64))
    }
}

/// Candidates for one step. Empty only when the universe is exhausted.
fn candidate_pool<R: Rng + ?Sized>(
    universe: &Universe<'_>,
    cfg: &SearchConfig,
    evaluated: &HashSet<String>,
    rng: &mut R,
) -> Result<Vec<CellGraph>> {
    let remaining = if cfg.dedup {
        universe.remaining_count(evaluated.len())
    } else {
        None
    };
    if remaining == Some(0) {
        return Ok(Vec::new());
    }
    if cfg.dedup_all {
        let wanted = remaining.map_or(cfg.candidates_per_step as u64, |r| {
            r.min(cfg.candidates_per_step as u64)
        });
        if Some(wanted) == remaining {
            if let Some(all) = universe.remaining(evaluated)? {
                return Ok(all);
            }
        }
        let mut seen = HashSet::with_capacity(wanted as usize);
        let mut pool = Vec::with_capacity(wanted as usize);
        while (pool.len() as u64) < wanted {
            let cell = universe.sample(rng)?;
            let d = cell.digest();
            if !evaluated.contains(&d) && seen.insert(d) {
                pool.push(cell);
            }
        }
        return Ok(pool);
    }
    let mut pool = Vec::with_capacity(cfg.candidates_per_step);
    for _ in 0..cfg.candidates_per_step {
        let cell = universe.sample(rng)?;
        if !cfg.dedup || !evaluated.contains(&cell.digest()) {
            pool.push(cell);
        }
    }
    if pool.is_empty() {
        return Ok(universe.remaining(evaluated)?.unwrap_or_default());
    }
    Ok(pool)
}

/// Index of the highest prediction; ties go to the smallest digest and NaN
/// never wins.
fn argmax(preds: &[f64], digests: &[String]) -> usize {
    let key = |p: f64| if p.is_nan() { f64::NEG_INFINITY } else { p };
    (0..preds.len())
        .min_by(|&a, &b| {
            key(preds[b])
                .total_cmp(&key(preds[a]))
                .then_with(|| digests[a].cmp(&digests[b]))
        })
        .expect("nonempty pool")
}

fn predict_pool<R>(model: &R, params: &R::Params, encoded: &[EncodedGraph]) -> Result<Vec<f64>>
where
    R: Regressor<Input = EncodedGraph>,
{
    let chunks = encoded
        .par_chunks(PREDICT_CHUNK)
        .map(|chunk| model.predict(params, &chunk.iter().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.concat())
}

/// Support targets standardized to zero mean and unit variance, or `None`
/// when fewer than two distinct values exist.
fn standardized(scores: &[f64]) -> Option<Vec<f64>> {
    if scores.len() < 2 {
        return None;
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
    (sd > 0.0).then(|| scores.iter().map(|s| (s - mean) / sd).collect())
}

/// Predictor-guided search with the GCN.
pub fn predictor_search<G: Rng + ?Sized>(
    space: &SearchSpaceDef,
    oracle: &mut Oracle,
    theta0: &GcnParams,
    scfg: &SearchConfig,
    mcfg: &MetaConfig,
    rng: &mut G,
) -> SearchResult {
    predictor_search_with(&Gcn, space, oracle, theta0, scfg, mcfg, rng)
}

/// Each step proposes candidates, evaluates the one the current predictor
/// ranks highest, and every `retrain_every` steps re-fits the predictor from
/// `theta0` on all evaluated pairs. Exactly one oracle call per step.
pub fn predictor_search_with<R, G>(
    model: &R,
    space: &SearchSpaceDef,
    oracle: &mut Oracle,
    theta0: &R::Params,
    scfg: &SearchConfig,
    mcfg: &MetaConfig,
    rng: &mut G,
) -> SearchResult
where
    R: Regressor<Input = EncodedGraph>,
    G: Rng + ?Sized,
{
    let mut history = SearchHistory::new("predictor", oracle.name());
    let setup = scfg.validate().and_then(|_| mcfg.validate()).and_then(|_| {
        if oracle.calls() == 0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "oracle has already served {} calls",
                oracle.calls()
            )))
        }
    });
    if let Err(e) = setup {
        return Err(fail(history, e));
    }
    let universe = match Universe::new(space, oracle) {
        Ok(u) => u,
        Err(e) => return Err(fail(history, e)),
    };
    let vocab = space.vocab();
    let mut params = theta0.clone();
    let mut evaluated = HashSet::new();
    let mut support: Vec<EncodedGraph> = Vec::new();
    let mut scores: Vec<f64> = Vec::new();

    for step in 1..=scfg.total_steps {
        let proposal = candidate_pool(&universe, scfg, &evaluated, rng).and_then(|pool| {
            let encoded = pool
                .par_iter()
                .map(|c| encode(c, vocab))
                .collect::<Result<Vec<_>>>()?;
            Ok((pool, encoded))
        });
        let (pool, encoded) = match proposal {
            Ok(p) => p,
            Err(e) => return Err(fail(history, e)),
        };
        if pool.is_empty() {
            history.early_stop = Some(format!(
                "search space exhausted after {} evaluations",
                step - 1
            ));
            break;
        }
        let preds = match predict_pool(model, &params, &encoded) {
            Ok(p) => p,
            Err(e) => return Err(fail(history, e)),
        };
        let digests: Vec<String> = pool.iter().map(CellGraph::digest).collect();
        let best = argmax(&preds, &digests);
        let outcome = oracle.evaluate(&pool[best]);
        history.oracle_calls = oracle.calls();
        let actual = match outcome {
            Ok(s) => s,
            Err(e) => return Err(fail(history, e)),
        };
        history.record(digests[best].clone(), Some(preds[best]), actual);
        evaluated.insert(digests[best].clone());
        support.push(encoded.into_iter().nth(best).expect("chosen index in pool"));
        scores.push(actual);

        if step % scfg.retrain_every == 0 && step < scfg.total_steps {
            let chosen_iters = match standardized(&scores) {
                Some(targets) => {
                    let batch = Batch {
                        inputs: support.iter().collect(),
                        targets,
                    };
                    match meta_test_finetune(model, theta0, &batch, mcfg) {
                        Ok(tuned) => {
                            params = tuned.params;
                            Some(tuned.chosen_iters)
                        }
                        Err(e) => return Err(fail(history, e)),
                    }
                }
                None => None,
            };
            history.refits.push(Refit {
                step,
                support: scores.len(),
                chosen_iters,
            });
        }
    }
    history.final_percentile = history
        .incumbent
        .as_ref()
        .and_then(|i| oracle.percentile(i.score));
    Ok(history)
}

/// Evaluates `budget` distinct uniformly drawn architectures.
pub fn random_search<G: Rng + ?Sized>(
    space: &SearchSpaceDef,
    oracle: &mut Oracle,
    budget: usize,
    rng: &mut G,
) -> SearchResult {
    let mut history = SearchHistory::new("random", oracle.name());
    if budget < 1 {
        return Err(fail(history, Error::Config("budget must be >= 1".into())));
    }
    if oracle.calls() != 0 {
        let e = Error::Config(format!(
            "oracle has already served {} calls",
            oracle.calls()
        ));
        return Err(fail(history, e));
    }
    let universe = match Universe::new(space, oracle) {
        Ok(u) => u,
        Err(e) => return Err(fail(history, e)),
    };
    let picks = match pick_distinct(&universe, budget, rng) {
        Ok(p) => p,
        Err(e) => return Err(fail(history, e)),
    };
    for cell in &picks {
        let outcome = oracle.evaluate(cell);
        history.oracle_calls = oracle.calls();
        match outcome {
            Ok(s) => history.record(cell.digest(), None, s),
            Err(e) => return Err(fail(history, e)),
        }
    }
    if picks.len() < budget {
        history.early_stop = Some(format!(
            "search space exhausted after {} evaluations",
            picks.len()
        ));
    }
    history.final_percentile = history
        .incumbent
        .as_ref()
        .and_then(|i| oracle.percentile(i.score));
    Ok(history)
}

fn pick_distinct<G: Rng + ?Sized>(
    universe: &Universe<'_>,
    budget: usize,
    rng: &mut G,
) -> Result<Vec<CellGraph>> {
    let size = universe.size();
    // Listing beats rejection sampling once the budget is a sizable share.
    if size.is_some_and(|s| s <= ENUMERATION_LIMIT && 2 * budget as u64 >= s) {
        if let Some(mut all) = universe.remaining(&HashSet::new())? {
            all.shuffle(rng);
            all.truncate(budget);
            return Ok(all);
        }
    }
    let mut seen = HashSet::with_capacity(budget);
    let mut picks = Vec::with_capacity(budget);
    while picks.len() < budget {
        let cell = universe.sample(rng)?;
        if seen.insert(cell.digest()) {
            picks.push(cell);
        }
    }
    Ok(picks)
}
