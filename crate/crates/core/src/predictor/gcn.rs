//! Forward and reverse passes of the GCN regressor.
//!
//! Each hidden layer computes `H' = relu(Â · H · W + b)` per graph, with
//! inverted dropout on `H'` in train mode. The prediction is a linear readout
//! of the global node's final embedding. The graphs of a batch are stacked row
//! wise so that `H · W` is a single matrix product for the whole batch; only
//! the propagation by `Â` is done graph by graph.

use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;

use super::model::Regressor;
use super::params::{GcnParams, Gradients, ParamLayout};
use crate::search_space::EncodedGraph;
use crate::seed::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<'a> {
    layout: Arc<ParamLayout>,
    batch: Vec<&'a EncodedGraph>,
    offsets: Vec<usize>,
    /// Input of each hidden layer; `inputs[0]` are the stacked features.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
    /// Scaled keep masks (`0` or `1/(1-p)`), train mode only.
    masks: Vec<Option<Array2<f64>>>,
    /// Output of the last hidden layer.
    last: Array2<f64>,
}

impl ForwardTrace<'_> {
    pub fn batch_len(&self) -> usize {
        self.batch.len()
    }

    fn readout_row(&self, g: usize) -> usize {
        self.offsets[g + 1] - 1
    }
}

fn stack_features(batch: &[&EncodedGraph], vocab_size: usize) -> Result<(Array2<f64>, Vec<usize>)> {
    let mut offsets = Vec::with_capacity(batch.len() + 1);
    offsets.push(0);
    for (g, enc) in batch.iter().enumerate() {
        if enc.features.ncols() != vocab_size {
            return Err(Error::Dimension(format!(
                "graph {g} has {} feature columns, predictor expects {vocab_size}",
                enc.features.ncols()
            )));
        }
        let n = enc.features.nrows();
        if enc.norm_adjacency.dim() != (n, n) || n == 0 {
            return Err(Error::Dimension(format!(
                "graph {g} has inconsistent adjacency"
            )));
        }
        offsets.push(offsets[g] + n);
    }
    let total = *offsets.last().expect("non-empty offsets");
    let mut x = Array2::zeros((total, vocab_size));
    for (g, enc) in batch.iter().enumerate() {
        x.slice_mut(s![offsets[g]..offsets[g + 1], ..])
            .assign(&enc.features);
    }
    Ok((x, offsets))
}

/// Per-graph `Â · M` (or `Âᵀ · M`) over row-stacked blocks.
fn propagate(
    batch: &[&EncodedGraph],
    offsets: &[usize],
    m: &Array2<f64>,
    transpose: bool,
) -> Array2<f64> {
    let mut out = Array2::zeros(m.raw_dim());
    for (g, enc) in batch.iter().enumerate() {
        let rows = offsets[g]..offsets[g + 1];
        let adj = if transpose {
            enc.norm_adjacency.t()
        } else {
            enc.norm_adjacency.view()
        };
        general_mat_mul(
            1.0,
            &adj,
            &m.slice(s![rows.clone(), ..]),
            0.0,
            &mut out.slice_mut(s![rows, ..]),
        );
    }
    out
}

fn check_layout(params: &GcnParams, layout: &Arc<ParamLayout>) -> Result<()> {
    if Arc::ptr_eq(params.layout(), layout) || params.layout().as_ref() == layout.as_ref() {
        Ok(())
    } else {
        Err(Error::Consistency(
            "trace was produced with a different parameter layout".into(),
        ))
    }
}

/// Predictions for a batch of graphs, plus the trace for [`backward`].
///
/// In train mode with a nonzero dropout rate, `rng` drives the dropout masks
/// and must be given.
pub fn forward<'a>(
    params: &GcnParams,
    batch: &[&'a EncodedGraph],
    mode: Mode,
    mut rng: Option<&mut Rng>,
) -> Result<(Vec<f64>, ForwardTrace<'a>)> {
    let layout = params.layout().clone();
    let p = layout.config.dropout_rate;
    let dropout = mode == Mode::Train && p > 0.0;
    if dropout && rng.is_none() {
        return Err(Error::Config(
            "train-mode dropout needs a random generator".into(),
        ));
    }
    let (x, offsets) = stack_features(batch, layout.vocab_size)?;
    let mut inputs = Vec::with_capacity(layout.num_layers());
    let mut pre = Vec::with_capacity(layout.num_layers());
    let mut masks = Vec::with_capacity(layout.num_layers());
    let mut h = x;
    for l in 0..layout.num_layers() {
        let projected = h.dot(&params.weight(l));
        let mut z = propagate(batch, &offsets, &projected, false);
        z += &params.bias(l);
        let mut a = z.mapv(|v| v.max(0.0));
        let mask = if dropout {
            let rng = rng.as_deref_mut().expect("checked above");
            let scale = 1.0 / (1.0 - p);
            let m = Array2::from_shape_simple_fn(a.raw_dim(), || {
                if rng.random::<f64>() < p {
                    0.0
                } else {
                    scale
                }
            });
            a *= &m;
            Some(m)
        } else {
            None
        };
        inputs.push(h);
        pre.push(z);
        masks.push(mask);
        h = a;
    }
    let head_w = params.head_weight();
    let head_b = params.head_bias();
    let preds = (0..batch.len())
        .map(|g| h.row(offsets[g + 1] - 1).dot(&head_w) + head_b)
        .collect();
    let trace = ForwardTrace {
        layout,
        batch: batch.to_vec(),
        offsets,
        inputs,
        pre,
        masks,
        last: h,
    };
    Ok((preds, trace))
}

/// Mean squared error and its gradient with respect to the predictions.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Domain("mse of an empty batch".into()));
    }
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let grad = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Reverse-mode gradients of `sum_g loss_grad[g] * prediction[g]` with
/// respect to every parameter; dropout masks come from the trace.
pub fn backward(
    trace: &ForwardTrace<'_>,
    params: &GcnParams,
    loss_grad: &[f64],
) -> Result<Gradients> {
    check_layout(params, &trace.layout)?;
    if loss_grad.len() != trace.batch.len() {
        return Err(Error::Consistency(format!(
            "{} loss gradients for a batch of {}",
            loss_grad.len(),
            trace.batch.len()
        )));
    }
    let layout = &trace.layout;
    let mut grads = GcnParams::zeros(params.layout().clone());

    let head_w = params.head_weight();
    let mut delta = Array2::<f64>::zeros(trace.last.raw_dim());
    {
        let mut gw = grads.head_weight_mut();
        for (g, &dy) in loss_grad.iter().enumerate() {
            let row = trace.readout_row(g);
            gw.scaled_add(dy, &trace.last.row(row));
            delta.row_mut(row).scaled_add(dy, &head_w);
        }
    }
    *grads.head_bias_mut() = loss_grad.iter().sum();

    for l in (0..layout.num_layers()).rev() {
        if let Some(mask) = &trace.masks[l] {
            delta *= mask;
        }
        Zip::from(&mut delta).and(&trace.pre[l]).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        grads.bias_mut(l).assign(&delta.sum_axis(Axis(0)));
        let back = propagate(&trace.batch, &trace.offsets, &delta, true);
        general_mat_mul(
            1.0,
            &trace.inputs[l].t(),
            &back,
            0.0,
            &mut grads.weight_mut(l),
        );
        if l > 0 {
            delta = back.dot(&params.weight(l).t());
        }
    }
    Ok(grads)
}

/// Hessian-vector product of the dropout-free batch MSE, computed exactly by
/// propagating directional derivatives through the forward and backward
/// passes.
pub fn hessian_vector_product(
    params: &GcnParams,
    batch: &[&EncodedGraph],
    targets: &[f64],
    direction: &GcnParams,
) -> Result<Gradients> {
    if !params.same_layout(direction) {
        return Err(Error::Consistency(
            "direction layout differs from params".into(),
        ));
    }
    if batch.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} graphs for {} targets",
            batch.len(),
            targets.len()
        )));
    }
    if batch.is_empty() {
        return Err(Error::Domain("hessian of an empty batch".into()));
    }
    let layout = params.layout();
    let (x, offsets) = stack_features(batch, layout.vocab_size)?;
    let layers = layout.num_layers();

    // forward with tangents
    let mut hs: Vec<Array2<f64>> = Vec::with_capacity(layers + 1);
    let mut dhs: Vec<Array2<f64>> = Vec::with_capacity(layers + 1);
    let mut actives: Vec<Array2<f64>> = Vec::with_capacity(layers);
    let zero_tangent = Array2::zeros(x.raw_dim());
    hs.push(x);
    dhs.push(zero_tangent);
    for l in 0..layers {
        let h = &hs[l];
        let dh = &dhs[l];
        let w = params.weight(l);
        let vw = direction.weight(l);
        let z = propagate(batch, &offsets, &h.dot(&w), false) + params.bias(l);
        let mut dp = dh.dot(&w);
        general_mat_mul(1.0, h, &vw, 1.0, &mut dp);
        let dz = propagate(batch, &offsets, &dp, false) + direction.bias(l);
        let active = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        hs.push(z.mapv(|v| v.max(0.0)));
        dhs.push(dz * &active);
        actives.push(active);
    }
    let last = &hs[layers];
    let dlast = &dhs[layers];
    let head_w = params.head_weight();
    let v_head_w = direction.head_weight();
    let n = batch.len() as f64;

    let mut out = GcnParams::zeros(params.layout().clone());
    let mut delta = Array2::<f64>::zeros(last.raw_dim());
    let mut ddelta = Array2::<f64>::zeros(last.raw_dim());
    let mut dsum = 0.0;
    {
        let mut r_head_w = out.head_weight_mut();
        for (g, &t) in targets.iter().enumerate() {
            let row = offsets[g + 1] - 1;
            let h = last.row(row);
            let dh = dlast.row(row);
            let y = h.dot(&head_w) + params.head_bias();
            let dy = dh.dot(&head_w) + h.dot(&v_head_w) + direction.head_bias();
            let e = 2.0 * (y - t) / n;
            let de = 2.0 * dy / n;
            dsum += de;
            r_head_w.scaled_add(de, &h);
            r_head_w.scaled_add(e, &dh);
            delta.row_mut(row).scaled_add(e, &head_w);
            let mut dd = ddelta.row_mut(row);
            dd.scaled_add(de, &head_w);
            dd.scaled_add(e, &v_head_w);
        }
    }
    *out.head_bias_mut() = dsum;

    for l in (0..layers).rev() {
        delta *= &actives[l];
        ddelta *= &actives[l];
        out.bias_mut(l).assign(&ddelta.sum_axis(Axis(0)));
        let back = propagate(batch, &offsets, &delta, true);
        let dback = propagate(batch, &offsets, &ddelta, true);
        {
            let mut rw = out.weight_mut(l);
            general_mat_mul(1.0, &dhs[l].t(), &back, 0.0, &mut rw);
            general_mat_mul(1.0, &hs[l].t(), &dback, 1.0, &mut rw);
        }
        if l > 0 {
            let w: ArrayView2<f64> = params.weight(l);
            let vw = direction.weight(l);
            let mut next_ddelta = dback.dot(&w.t());
            general_mat_mul(1.0, &back, &vw.t(), 1.0, &mut next_ddelta);
            delta = back.dot(&w.t());
            ddelta = next_ddelta;
        }
    }
    Ok(out)
}

/// The GCN as a [`Regressor`]; all architecture information lives in the
/// parameter layout.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gcn;

const PREDICT_CHUNK: usize = 512;

impl Regressor for Gcn {
    type Params = GcnParams;
    type Input = EncodedGraph;

    fn loss_grad(
        &self,
        params: &GcnParams,
        inputs: &[&EncodedGraph],
        targets: &[f64],
        dropout: Option<&mut Rng>,
    ) -> Result<(f64, GcnParams)> {
        let mode = if dropout.is_some() {
            Mode::Train
        } else {
            Mode::Eval
        };
        let (preds, trace) = forward(params, inputs, mode, dropout)?;
        let (loss, dl) = mse_loss(&preds, targets)?;
        let grads = backward(&trace, params, &dl)?;
        Ok((loss, grads))
    }

    fn loss_hvp(
        &self,
        params: &GcnParams,
        inputs: &[&EncodedGraph],
        targets: &[f64],
        direction: &GcnParams,
    ) -> Result<GcnParams> {
        hessian_vector_product(params, inputs, targets, direction)
    }

    fn predict(&self, params: &GcnParams, inputs: &[&EncodedGraph]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(PREDICT_CHUNK) {
            out.extend(forward(params, chunk, Mode::Eval, None)?.0);
        }
        Ok(out)
    }
}
