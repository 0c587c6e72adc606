//! Meta-learned graph-convolutional performance predictors for neural
//! architecture search.
//!
//! The crate is organised bottom-up:
//!
//! - [`search_space`]: cell graphs, the unified operation vocabulary, encoding
//!   into GCN inputs, sampling and counting of mixed-ops template spaces.
//! - [`nas_data`]: architecture/performance tables, normalization,
//!   support/query splitting and synthetic task generation.
//! - [`predictor`]: the GCN regressor with hand-written reverse-mode
//!   gradients, Hessian-vector products, SGD and AdamW.
//! - [`meta_learner`]: MAML / first-order MAML / ANIL / BOIL meta-training and
//!   fine-tuning with a leave-one-out grid search over inner iterations.
//! - [`evaluation`]: Spearman correlation, transfer protocols and the
//!   synthetic transferability studies.
//! - [`nas_search`]: predictor-guided and random architecture search against a
//!   metered oracle.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod meta_learner;
pub mod nas_data;
pub mod nas_search;
pub mod predictor;
pub mod search_space;
pub mod seed;

pub use error::{Error, Result};
