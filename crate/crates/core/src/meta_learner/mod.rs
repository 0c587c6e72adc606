//! Meta-training of predictor initializations (MAML, first-order MAML, ANIL,
//! BOIL) and meta-test fine-tuning.
//!
//! The loops are generic over [`Regressor`](crate::predictor::Regressor), so
//! the same code trains the GCN and the small closed-form models used to
//! check meta-gradients.

mod config;
mod finetune;
mod loops;
mod train;

pub use config::{Algorithm, MetaConfig, SECOND_ORDER_UNROLL_LIMIT};
pub use finetune::{meta_test_finetune, Finetuned};
pub use loops::{
    chunked_loss_grad, inner_adapt, outer_step, sgd_adapt, task_meta_gradient, Batch, MetaState,
    TaskSplit,
};
pub use train::{
    collection_vocab_size, encode_collection, meta_preflight, meta_train, meta_train_from,
    meta_train_partial, supervised_train, EncodedTask,
};

#[cfg(test)]
mod tests;
