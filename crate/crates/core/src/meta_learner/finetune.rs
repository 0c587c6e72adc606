use rayon::prelude::*;

use super::config::MetaConfig;
use super::loops::{sgd_adapt, Batch};
use crate::evaluation::spearman;
use crate::predictor::{sgd_step, ParamMask, Regressor};
use crate::{Error, Result};

/// Result of meta-test fine-tuning: the adapted parameters, the selected
/// number of iterations and the leave-one-out Spearman of every grid entry.
#[derive(Debug, Clone)]
pub struct Finetuned<P> {
    pub params: P,
    pub chosen_iters: usize,
    pub cv_scores: Vec<(usize, f64)>,
}

/// Held-out prediction after each grid count for one leave-one-out fold.
/// Counts reached after a divergence predict NaN.
fn fold_predictions<R: Regressor>(
    model: &R,
    init: &R::Params,
    support: &Batch<'_, R::Input>,
    held_out: usize,
    grid: &[usize],
    lr: f64,
    mask: ParamMask,
) -> Result<Vec<f64>> {
    let keep: Vec<usize> = (0..support.len()).filter(|&i| i != held_out).collect();
    let inputs: Vec<_> = keep.iter().map(|&i| support.inputs[i]).collect();
    let targets: Vec<_> = keep.iter().map(|&i| support.targets[i]).collect();
    let probe = [support.inputs[held_out]];
    let mut params = init.clone();
    let mut done = 0;
    let mut out = Vec::with_capacity(grid.len());
    let mut diverged = false;
    for &count in grid {
        while !diverged && done < count {
            let (loss, grads) = model.loss_grad(&params, &inputs, &targets, None)?;
            if !loss.is_finite() {
                diverged = true;
                break;
            }
            sgd_step(&mut params, &grads, lr, mask)?;
            done += 1;
        }
        if diverged {
            out.push(f64::NAN);
        } else {
            out.push(model.predict(&params, &probe)?[0]);
        }
    }
    Ok(out)
}

/// Fine-tunes `theta` on the support at the reduced rate
/// `inner_lr · finetune_lr_scale`, choosing the number of full-batch steps
/// from `cfg.finetune_grid` by leave-one-out Spearman on the support (ties
/// go to the smaller count). No dropout is used anywhere in this procedure.
pub fn meta_test_finetune<R: Regressor>(
    model: &R,
    theta: &R::Params,
    support: &Batch<'_, R::Input>,
    cfg: &MetaConfig,
) -> Result<Finetuned<R::Params>>
where
    R::Params: Send,
{
    if support.len() < 2 {
        return Err(Error::Size(format!(
            "fine-tuning needs at least 2 support records, got {}",
            support.len()
        )));
    }
    if support.targets.iter().all(|&t| t == support.targets[0]) {
        return Err(Error::Degenerate("fine-tuning support".into()));
    }
    let mut grid = cfg.finetune_grid.clone();
    if grid.is_empty() {
        return Err(Error::Config("finetune_grid must be nonempty".into()));
    }
    grid.sort_unstable();
    grid.dedup();
    if grid == [0] {
        return Ok(Finetuned {
            params: theta.clone(),
            chosen_iters: 0,
            cv_scores: vec![(0, f64::NAN)],
        });
    }
    let lr = cfg.finetune_lr();
    let mask = cfg.algorithm.inner_mask();
    let folds: Vec<Vec<f64>> = (0..support.len())
        .into_par_iter()
        .map(|i| fold_predictions(model, theta, support, i, &grid, lr, mask))
        .collect::<Result<_>>()?;
    let mut cv_scores = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (g, &count) in grid.iter().enumerate() {
        let preds: Vec<f64> = folds.iter().map(|f| f[g]).collect();
        let score = if preds.iter().any(|p| !p.is_finite()) {
            f64::NEG_INFINITY
        } else {
            spearman(&preds, &support.targets)?
        };
        cv_scores.push((count, score));
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((count, score));
        }
    }
    let (chosen_iters, _) = best.expect("nonempty grid");
    let params = sgd_adapt(
        model,
        theta,
        support,
        chosen_iters,
        lr,
        mask,
        None,
        "<finetune>",
    )?;
    Ok(Finetuned {
        params,
        chosen_iters,
        cv_scores,
    })
}
