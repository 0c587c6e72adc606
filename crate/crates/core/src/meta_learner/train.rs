use rand::seq::SliceRandom;
use rand::Rng as _;

use super::config::MetaConfig;
use super::loops::{outer_step, Batch, MetaState, TaskSplit};
use crate::nas_data::{normalize_scores, split_indices, TaskCollection, TaskTable};
use crate::predictor::{init_params, Gcn, GcnParams, OptimizerState, Regressor};
use crate::search_space::{encode, EncodedGraph};
use crate::seed::Rng;
use crate::{Error, Result};

/// A task ready for training: model inputs and (normalized) targets.
#[derive(Debug, Clone)]
pub struct EncodedTask<I> {
    pub task_id: String,
    pub inputs: Vec<I>,
    pub targets: Vec<f64>,
}

impl<I> EncodedTask<I> {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Batch<'_, I> {
        Batch::new(
            indices.iter().map(|&i| &self.inputs[i]).collect(),
            indices.iter().map(|&i| self.targets[i]).collect(),
        )
    }

    pub fn full_batch(&self) -> Batch<'_, I> {
        Batch::new(self.inputs.iter().collect(), self.targets.clone())
    }
}

impl EncodedTask<EncodedGraph> {
    /// Encodes every architecture of `table`; raw tables are z-scored first.
    pub fn from_table(table: &TaskTable) -> Result<Self> {
        let normalized;
        let table = if table.is_normalized() {
            table
        } else {
            normalized = normalize_scores(table)?;
            &normalized
        };
        let vocab = table.space().vocab();
        let inputs = table
            .records()
            .iter()
            .map(|r| encode(&r.arch, vocab))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncodedTask {
            task_id: table.task_id().to_string(),
            inputs,
            targets: table.scores(),
        })
    }
}

pub fn encode_collection(collection: &TaskCollection) -> Result<Vec<EncodedTask<EncodedGraph>>> {
    collection
        .tables()
        .iter()
        .map(EncodedTask::from_table)
        .collect()
}

/// Vocabulary size shared by every table of the collection.
pub fn collection_vocab_size(collection: &TaskCollection) -> Result<usize> {
    let mut sizes = collection.tables().iter().map(|t| t.space().vocab().len());
    let first = sizes
        .next()
        .ok_or_else(|| Error::Config("empty task collection".into()))?;
    if sizes.any(|s| s != first) {
        return Err(Error::Config(
            "task tables use vocabularies of different sizes".into(),
        ));
    }
    Ok(first)
}

fn preflight<I>(tasks: &[EncodedTask<I>], cfg: &MetaConfig) -> Result<()> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(Error::Config(
            "meta-training needs at least one task".into(),
        ));
    }
    let need = cfg.n_finetune + cfg.n_val;
    for t in tasks {
        if t.len() < need {
            return Err(Error::Config(format!(
                "task `{}` has {} records, meta-training needs n_finetune + n_val = {need}",
                t.task_id,
                t.len()
            )));
        }
    }
    Ok(())
}

/// Meta-trains from `init`: each epoch samples `K` tasks uniformly with
/// replacement, draws fresh disjoint support/query splits and takes one
/// outer step.
pub fn meta_train_from<R: Regressor>(
    model: &R,
    init: R::Params,
    tasks: &[EncodedTask<R::Input>],
    cfg: &MetaConfig,
    rng: &mut Rng,
) -> Result<MetaState<R::Params>> {
    preflight(tasks, cfg)?;
    let mut state = MetaState::new(init, cfg);
    run_epochs(model, &mut state, tasks, cfg, rng)?;
    Ok(state)
}

fn run_epochs<R: Regressor>(
    model: &R,
    state: &mut MetaState<R::Params>,
    tasks: &[EncodedTask<R::Input>],
    cfg: &MetaConfig,
    rng: &mut Rng,
) -> Result<()> {
    for _ in 0..cfg.epochs {
        let mut batch = Vec::with_capacity(cfg.tasks_per_iter);
        for _ in 0..cfg.tasks_per_iter {
            let t = &tasks[rng.random_range(0..tasks.len())];
            let (s, q) = split_indices(t.len(), cfg.n_finetune, cfg.n_val, rng)?;
            batch.push(TaskSplit {
                task_id: t.task_id.clone(),
                support: t.batch(&s),
                query: t.batch(&q),
            });
        }
        outer_step(model, state, &batch, cfg, rng)?;
    }
    Ok(())
}

/// Meta-trains a freshly initialized GCN (drawn from `rng`) on every table of
/// the collection.
pub fn meta_train(
    collection: &TaskCollection,
    cfg: &MetaConfig,
    rng: &mut Rng,
) -> Result<MetaState<GcnParams>> {
    match meta_train_partial(collection, cfg, rng)? {
        (state, None) => Ok(state),
        (_, Some(e)) => Err(e),
    }
}

/// Checks everything [`meta_train`] checks before it starts training.
pub fn meta_preflight(collection: &TaskCollection, cfg: &MetaConfig) -> Result<()> {
    cfg.validate()?;
    collection_vocab_size(collection)?;
    let need = cfg.n_finetune + cfg.n_val;
    for t in collection.tables() {
        if t.len() < need {
            return Err(Error::Config(format!(
                "task `{}` has {} records, meta-training needs n_finetune + n_val = {need}",
                t.task_id(),
                t.len()
            )));
        }
    }
    Ok(())
}

/// [`meta_train`] that keeps the state reached before a mid-training
/// failure. Configuration and pre-flight errors are still returned as `Err`.
pub fn meta_train_partial(
    collection: &TaskCollection,
    cfg: &MetaConfig,
    rng: &mut Rng,
) -> Result<(MetaState<GcnParams>, Option<Error>)> {
    cfg.validate()?;
    let vocab = collection_vocab_size(collection)?;
    let tasks = encode_collection(collection)?;
    preflight(&tasks, cfg)?;
    let init = init_params(&cfg.predictor, vocab, rng)?;
    let mut state = MetaState::new(init, cfg);
    let failure = run_epochs(&Gcn, &mut state, &tasks, cfg, rng).err();
    Ok((state, failure))
}

/// Plain supervised training with AdamW over shuffled minibatches; returns
/// the mean training loss of each epoch.
#[allow(clippy::too_many_arguments)]
pub fn supervised_train<R: Regressor>(
    model: &R,
    params: &mut R::Params,
    task: &Batch<'_, R::Input>,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    weight_decay: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if task.is_empty() {
        return Err(Error::Size("supervised training on an empty task".into()));
    }
    let mut opt = OptimizerState::adamw(
        lr,
        weight_decay,
        crate::predictor::Parameters::values(params).len(),
    );
    let mut order: Vec<usize> = (0..task.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch_size.max(1)) {
            let inputs: Vec<_> = chunk.iter().map(|&i| task.inputs[i]).collect();
            let targets: Vec<_> = chunk.iter().map(|&i| task.targets[i]).collect();
            let (loss, grads) = model.loss_grad(params, &inputs, &targets, Some(rng))?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    task: "<supervised>".into(),
                    step: epoch,
                });
            }
            total += loss * chunk.len() as f64;
            opt.step(params, &grads)?;
        }
        history.push(total / task.len() as f64);
    }
    Ok(history)
}
