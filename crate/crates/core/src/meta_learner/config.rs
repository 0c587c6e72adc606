use serde::{Deserialize, Serialize};

use crate::predictor::{GcnConfig, ParamMask};
use crate::{Error, Result};

/// Maximum number of inner steps the exact second-order meta-gradient will
/// unroll.
pub const SECOND_ORDER_UNROLL_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Maml,
    Fomaml,
    Anil,
    Boil,
}

impl Algorithm {
    /// Parameters touched by inner adaptation and fine-tuning.
    pub fn inner_mask(self) -> ParamMask {
        match self {
            Algorithm::Maml | Algorithm::Fomaml => ParamMask::All,
            Algorithm::Boil => ParamMask::BodyOnly,
            Algorithm::Anil => ParamMask::HeadOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    pub algorithm: Algorithm,
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub inner_steps: usize,
    pub tasks_per_iter: usize,
    pub n_finetune: usize,
    pub n_val: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub finetune_grid: Vec<usize>,
    pub finetune_lr_scale: f64,
    /// Exact unrolled meta-gradient; ignored by `fomaml`.
    pub second_order: bool,
    pub weight_decay: f64,
    pub predictor: GcnConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            algorithm: Algorithm::Boil,
            inner_lr: 0.035,
            outer_lr: 8e-5,
            inner_steps: 6,
            tasks_per_iter: 4,
            n_finetune: 5,
            n_val: 32,
            epochs: 400,
            batch_size: 64,
            finetune_grid: vec![5, 10, 20, 50, 100],
            finetune_lr_scale: 0.1,
            second_order: false,
            weight_decay: 0.01,
            predictor: GcnConfig::default(),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.inner_lr > 0.0 && self.inner_lr.is_finite()) {
            return fail(format!("inner_lr must be > 0, got {}", self.inner_lr));
        }
        if !(self.outer_lr > 0.0 && self.outer_lr.is_finite()) {
            return fail(format!("outer_lr must be > 0, got {}", self.outer_lr));
        }
        if self.tasks_per_iter < 1 {
            return fail("tasks_per_iter must be >= 1".into());
        }
        if self.n_val < 1 {
            return fail("n_val must be >= 1".into());
        }
        if self.batch_size < 1 {
            return fail("batch_size must be >= 1".into());
        }
        if self.finetune_grid.is_empty() {
            return fail("finetune_grid must be nonempty".into());
        }
        if !(self.finetune_lr_scale > 0.0 && self.finetune_lr_scale <= 1.0) {
            return fail(format!(
                "finetune_lr_scale must be in (0, 1], got {}",
                self.finetune_lr_scale
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return fail("weight_decay must be >= 0".into());
        }
        if self.uses_second_order() && self.inner_steps > SECOND_ORDER_UNROLL_LIMIT {
            return fail(format!(
                "second-order meta-gradients unroll at most {SECOND_ORDER_UNROLL_LIMIT} inner steps, got {}",
                self.inner_steps
            ));
        }
        self.predictor.validate()
    }

    pub fn uses_second_order(&self) -> bool {
        self.second_order && self.algorithm != Algorithm::Fomaml
    }

    pub fn finetune_lr(&self) -> f64 {
        self.inner_lr * self.finetune_lr_scale
    }
}
