use std::ops::Range;
use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::Parameters;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GcnConfig {
    pub num_hidden_layers: usize,
    pub width: usize,
    pub dropout_rate: f64,
    pub activation: Activation,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            num_hidden_layers: 4,
            width: 600,
            dropout_rate: 0.2,
            activation: Activation::Relu,
        }
    }
}

impl GcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 1 {
            return Err(Error::Config("GCN width must be >= 1".into()));
        }
        if self.num_hidden_layers < 1 {
            return Err(Error::Config("GCN needs at least one hidden layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Where each tensor lives in the flat parameter vector. Hidden layers come
/// first (weight then bias per layer) and form the body; the readout weight
/// vector and bias come last and form the head.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub config: GcnConfig,
    pub vocab_size: usize,
    weight_offsets: Vec<usize>,
    bias_offsets: Vec<usize>,
    head_weight_offset: usize,
    head_bias_offset: usize,
    len: usize,
}

/// A named tensor slot of the layout, used by checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamLayout {
    pub fn new(config: GcnConfig, vocab_size: usize) -> Result<Self> {
        config.validate()?;
        if vocab_size == 0 {
            return Err(Error::Config("vocabulary size must be positive".into()));
        }
        let mut offset = 0;
        let mut weight_offsets = Vec::new();
        let mut bias_offsets = Vec::new();
        for l in 0..config.num_hidden_layers {
            let fan_in = if l == 0 { vocab_size } else { config.width };
            weight_offsets.push(offset);
            offset += fan_in * config.width;
            bias_offsets.push(offset);
            offset += config.width;
        }
        let head_weight_offset = offset;
        offset += config.width;
        let head_bias_offset = offset;
        offset += 1;
        Ok(ParamLayout {
            config,
            vocab_size,
            weight_offsets,
            bias_offsets,
            head_weight_offset,
            head_bias_offset,
            len: offset,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_hidden_layers
    }

    pub fn fan_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.vocab_size
        } else {
            self.config.width
        }
    }

    pub fn weight_range(&self, layer: usize) -> Range<usize> {
        let start = self.weight_offsets[layer];
        start..start + self.fan_in(layer) * self.config.width
    }

    pub fn bias_range(&self, layer: usize) -> Range<usize> {
        let start = self.bias_offsets[layer];
        start..start + self.config.width
    }

    pub fn head_weight_range(&self) -> Range<usize> {
        self.head_weight_offset..self.head_weight_offset + self.config.width
    }

    pub fn head_bias_index(&self) -> usize {
        self.head_bias_offset
    }

    pub fn head_range(&self) -> Range<usize> {
        self.head_weight_offset..self.len
    }

    pub fn tensors(&self) -> Vec<TensorSpec> {
        let w = self.config.width;
        let mut out = Vec::new();
        for l in 0..self.num_layers() {
            out.push(TensorSpec {
                name: format!("body.{l}.weight"),
                shape: vec![self.fan_in(l), w],
            });
            out.push(TensorSpec {
                name: format!("body.{l}.bias"),
                shape: vec![w],
            });
        }
        out.push(TensorSpec {
            name: "head.weight".into(),
            shape: vec![w],
        });
        out.push(TensorSpec {
            name: "head.bias".into(),
            shape: vec![1],
        });
        out
    }
}

/// All predictor weights as one flat vector plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    layout: Arc<ParamLayout>,
    values: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type Gradients = GcnParams;

impl GcnParams {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let values = vec![0.0; layout.len()];
        GcnParams { layout, values }
    }

    pub fn from_values(layout: Arc<ParamLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Dimension(format!(
                "{} values for a layout of {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(GcnParams { layout, values })
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn config(&self) -> &GcnConfig {
        &self.layout.config
    }

    pub fn vocab_size(&self) -> usize {
        self.layout.vocab_size
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        let r = self.layout.weight_range(layer);
        ArrayView2::from_shape(
            (self.layout.fan_in(layer), self.layout.config.width),
            &self.values[r],
        )
        .expect("layout shapes are consistent")
    }

    pub fn weight_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, f64> {
        let r = self.layout.weight_range(layer);
        let shape = (self.layout.fan_in(layer), self.layout.config.width);
        ArrayViewMut2::from_shape(shape, &mut self.values[r]).expect("layout shapes are consistent")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.values[self.layout.bias_range(layer)])
    }

    pub fn bias_mut(&mut self, layer: usize) -> ArrayViewMut1<'_, f64> {
        let r = self.layout.bias_range(layer);
        ArrayViewMut1::from(&mut self.values[r])
    }

    pub fn head_weight(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.values[self.layout.head_weight_range()])
    }

    pub fn head_weight_mut(&mut self) -> ArrayViewMut1<'_, f64> {
        let r = self.layout.head_weight_range();
        ArrayViewMut1::from(&mut self.values[r])
    }

    pub fn head_bias(&self) -> f64 {
        self.values[self.layout.head_bias_index()]
    }

    pub fn head_bias_mut(&mut self) -> &mut f64 {
        let i = self.layout.head_bias_index();
        &mut self.values[i]
    }

    pub fn body_values(&self) -> &[f64] {
        &self.values[..self.layout.head_range().start]
    }

    pub fn head_values(&self) -> &[f64] {
        &self.values[self.layout.head_range()]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_layout(&self, other: &GcnParams) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }
}

impl Parameters for GcnParams {
    fn values(&self) -> &[f64] {
        &self.values
    }

    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn head_range(&self) -> Range<usize> {
        self.layout.head_range()
    }

    fn zeros_like(&self) -> Self {
        GcnParams::zeros(self.layout.clone())
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params<R: Rng + ?Sized>(
    config: &GcnConfig,
    vocab_size: usize,
    rng: &mut R,
) -> Result<GcnParams> {
    let layout = Arc::new(ParamLayout::new(config.clone(), vocab_size)?);
    let mut params = GcnParams::zeros(layout.clone());
    let width = config.width;
    let mut fill = |range: Range<usize>, fan_in: usize, fan_out: usize| {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in &mut params.values[range] {
            *v = rng.random_range(-limit..limit);
        }
    };
    for l in 0..layout.num_layers() {
        fill(layout.weight_range(l), layout.fan_in(l), width);
    }
    fill(layout.head_weight_range(), width, 1);
    Ok(params)
}
