//! The GCN performance predictor.

mod checkpoint;
mod gcn;
mod model;
mod optim;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use gcn::{backward, forward, hessian_vector_product, mse_loss, ForwardTrace, Gcn, Mode};
pub use model::{ParamMask, Parameters, Regressor};
pub use optim::{adamw_step, sgd_step, OptimizerKind, OptimizerState};
pub use params::{
    init_params, Activation, GcnConfig, GcnParams, Gradients, ParamLayout, TensorSpec,
};
