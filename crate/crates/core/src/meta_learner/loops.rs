//! Inner adaptation and the outer (meta) update.

use rand::Rng as _;
use rayon::prelude::*;

use super::config::MetaConfig;
use crate::predictor::{sgd_step, OptimizerState, ParamMask, Parameters, Regressor};
use crate::seed::{self, Rng};
use crate::{Error, Result};

/// Borrowed inputs with their targets.
#[derive(Debug)]
pub struct Batch<'a, I> {
    pub inputs: Vec<&'a I>,
    pub targets: Vec<f64>,
}

impl<I> Clone for Batch<'_, I> {
    fn clone(&self) -> Self {
        Batch {
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
        }
    }
}

impl<'a, I> Batch<'a, I> {
    pub fn new(inputs: Vec<&'a I>, targets: Vec<f64>) -> Self {
        debug_assert_eq!(inputs.len(), targets.len());
        Batch { inputs, targets }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// One task's support (fine-tuning) and query (validation) samples.
#[derive(Debug)]
pub struct TaskSplit<'a, I> {
    pub task_id: String,
    pub support: Batch<'a, I>,
    pub query: Batch<'a, I>,
}

/// Meta-training state: the current initialization, the outer optimizer and
/// the mean query loss of every completed outer step.
#[derive(Debug, Clone)]
pub struct MetaState<P> {
    pub params: P,
    pub optimizer: OptimizerState,
    pub iteration: u64,
    pub history: Vec<f64>,
}

impl<P: Parameters> MetaState<P> {
    pub fn new(params: P, cfg: &MetaConfig) -> Self {
        let n = params.values().len();
        MetaState {
            params,
            optimizer: OptimizerState::adamw(cfg.outer_lr, cfg.weight_decay, n),
            iteration: 0,
            history: Vec::new(),
        }
    }
}

pub(crate) fn add_scaled<P: Parameters>(acc: &mut P, scale: f64, other: &P) {
    for (a, b) in acc.values_mut().iter_mut().zip(other.values()) {
        *a += scale * b;
    }
}

fn is_finite<P: Parameters>(p: &P) -> bool {
    p.values().iter().all(|v| v.is_finite())
}

/// Full-batch gradient steps on the support at rate `lr`, restricted to
/// `mask`. Any non-finite loss or parameter is a divergence at that step.
#[allow(clippy::too_many_arguments)]
pub fn sgd_adapt<R: Regressor>(
    model: &R,
    init: &R::Params,
    support: &Batch<'_, R::Input>,
    steps: usize,
    lr: f64,
    mask: ParamMask,
    mut dropout: Option<&mut Rng>,
    task: &str,
) -> Result<R::Params> {
    if support.is_empty() {
        return Err(Error::Size(format!("task `{task}`: empty support")));
    }
    let mut params = init.clone();
    for step in 0..steps {
        let (loss, grads) = model.loss_grad(
            &params,
            &support.inputs,
            &support.targets,
            dropout.as_deref_mut(),
        )?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                task: task.to_string(),
                step,
            });
        }
        sgd_step(&mut params, &grads, lr, mask)?;
        if !is_finite(&params) {
            return Err(Error::Divergence {
                task: task.to_string(),
                step,
            });
        }
    }
    Ok(params)
}

/// `cfg.inner_steps` full-batch SGD steps at `cfg.inner_lr` with the
/// algorithm's inner mask.
pub fn inner_adapt<R: Regressor>(
    model: &R,
    init: &R::Params,
    support: &Batch<'_, R::Input>,
    cfg: &MetaConfig,
    dropout: Option<&mut Rng>,
    task: &str,
) -> Result<R::Params> {
    sgd_adapt(
        model,
        init,
        support,
        cfg.inner_steps,
        cfg.inner_lr,
        cfg.algorithm.inner_mask(),
        dropout,
        task,
    )
}

/// Mean loss and gradient over `batch`, evaluated in chunks of `chunk`.
pub fn chunked_loss_grad<R: Regressor>(
    model: &R,
    params: &R::Params,
    batch: &Batch<'_, R::Input>,
    chunk: usize,
    mut dropout: Option<&mut Rng>,
) -> Result<(f64, R::Params)> {
    if batch.is_empty() {
        return Err(Error::Domain("loss of an empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = params.zeros_like();
    for (inputs, targets) in batch.inputs.chunks(chunk).zip(batch.targets.chunks(chunk)) {
        let (l, g) = model.loss_grad(params, inputs, targets, dropout.as_deref_mut())?;
        let w = targets.len() as f64 / n;
        loss += w * l;
        add_scaled(&mut grads, w, &g);
    }
    Ok((loss, grads))
}

/// Exact meta-gradient through the unrolled inner loop: starting from the
/// query gradient at the adapted parameters, apply
/// `v ← v − α·H(θ_k)·(M ⊙ v)` for `k = K−1, …, 0`.
fn unrolled_meta_gradient<R: Regressor>(
    model: &R,
    init: &R::Params,
    task: &TaskSplit<'_, R::Input>,
    cfg: &MetaConfig,
) -> Result<(f64, R::Params)> {
    let mask = cfg.algorithm.inner_mask();
    let mut trajectory = Vec::with_capacity(cfg.inner_steps + 1);
    trajectory.push(init.clone());
    for step in 0..cfg.inner_steps {
        let current = trajectory.last().expect("nonempty");
        let next = sgd_adapt(
            model,
            current,
            &task.support,
            1,
            cfg.inner_lr,
            mask,
            None,
            &task.task_id,
        )
        .map_err(|e| match e {
            Error::Divergence { task, .. } => Error::Divergence { task, step },
            other => other,
        })?;
        trajectory.push(next);
    }
    let adapted = trajectory.pop().expect("nonempty");
    let (loss, mut v) = chunked_loss_grad(model, &adapted, &task.query, cfg.batch_size, None)?;
    for theta in trajectory.iter().rev() {
        let mut masked = v.clone();
        mask.apply(&mut masked);
        let hv = model.loss_hvp(theta, &task.support.inputs, &task.support.targets, &masked)?;
        add_scaled(&mut v, -cfg.inner_lr, &hv);
    }
    Ok((loss, v))
}

/// Query loss and outer-gradient contribution of one task.
pub fn task_meta_gradient<R: Regressor>(
    model: &R,
    init: &R::Params,
    task: &TaskSplit<'_, R::Input>,
    cfg: &MetaConfig,
    dropout_seed: u64,
) -> Result<(f64, R::Params)> {
    if cfg.uses_second_order() {
        return unrolled_meta_gradient(model, init, task, cfg);
    }
    let mut rng = seed::rng(dropout_seed);
    let adapted = inner_adapt(
        model,
        init,
        &task.support,
        cfg,
        Some(&mut rng),
        &task.task_id,
    )?;
    chunked_loss_grad(model, &adapted, &task.query, cfg.batch_size, Some(&mut rng))
}

/// One outer update: the summed per-task meta-gradients drive an AdamW step
/// on the initialization. Returns the mean query loss over the tasks.
pub fn outer_step<R: Regressor>(
    model: &R,
    state: &mut MetaState<R::Params>,
    tasks: &[TaskSplit<'_, R::Input>],
    cfg: &MetaConfig,
    rng: &mut Rng,
) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::Input("outer step with no tasks".into()));
    }
    let seeds: Vec<u64> = tasks.iter().map(|_| rng.random()).collect();
    let init = &state.params;
    let parts: Vec<Result<(f64, R::Params)>> = tasks
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(task, &s)| task_meta_gradient(model, init, task, cfg, s))
        .collect();
    let mut total = state.params.zeros_like();
    let mut loss = 0.0;
    for (task, part) in tasks.iter().zip(parts) {
        let (l, g) = part?;
        if !l.is_finite() {
            return Err(Error::Divergence {
                task: task.task_id.clone(),
                step: cfg.inner_steps,
            });
        }
        loss += l;
        add_scaled(&mut total, 1.0, &g);
    }
    state.optimizer.step(&mut state.params, &total)?;
    if !is_finite(&state.params) {
        return Err(Error::Divergence {
            task: "<outer>".into(),
            step: state.iteration as usize,
        });
    }
    state.iteration += 1;
    let mean = loss / tasks.len() as f64;
    state.history.push(mean);
    Ok(mean)
}
