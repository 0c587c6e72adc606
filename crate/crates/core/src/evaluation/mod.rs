//! Rank correlation, transfer protocols and the synthetic transferability
//! studies.

mod metrics;
mod protocols;
mod report;
mod studies;

pub use metrics::{average_ranks, mean_stderr, pearson, spearman};
pub use protocols::{
    finetune_and_score, finetune_count_ablation, finetune_count_ablation_from, loo_transfer_eval,
    meta_train_excluding, pretrain_on, random_init_score, rho_on, target_split, transfer_eval_from,
    EvalConfig, SourceMode, SupervisedConfig, DEFAULT_ABLATION_COUNTS,
};
pub use report::{seed_hash, EvalReport, EvalRow, RunStats, SweepCurve, SweepPoint};
pub use studies::{synthetic_study, StudyConfig, StudyKind};
