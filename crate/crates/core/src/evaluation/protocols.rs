//! Leave-one-out transfer evaluation and the fine-tune-count ablation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::spearman;
use super::report::{EvalReport, EvalRow, RunStats, SweepCurve, SweepPoint};
use crate::meta_learner::{
    collection_vocab_size, meta_test_finetune, meta_train, supervised_train, EncodedTask,
    MetaConfig,
};
use crate::nas_data::{TaskCollection, TaskTable};
use crate::predictor::{init_params, Gcn, GcnParams, Regressor};
use crate::search_space::EncodedGraph;
use crate::seed;
use crate::{Error, Result};

/// Where the initialization of the target predictor comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    /// Meta-trained on every other task.
    Meta,
    /// Fresh initialization trained on the support only.
    Random,
    /// Supervised pre-training on one other task, averaged over sources.
    Naive,
}

/// Plain supervised training used by the random-init and naive baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisedConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        SupervisedConfig {
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 64,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub meta: MetaConfig,
    pub supervised: SupervisedConfig,
    pub runs: usize,
    pub n_finetune: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            meta: MetaConfig::default(),
            supervised: SupervisedConfig::default(),
            runs: 10,
            n_finetune: 5,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        if self.runs < 1 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.supervised.batch_size < 1 || !(self.supervised.learning_rate > 0.0) {
            return Err(Error::Config(
                "supervised batch_size and learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Spearman of `params`' predictions on `indices` of `task`.
pub fn rho_on(
    params: &GcnParams,
    task: &EncodedTask<EncodedGraph>,
    indices: &[usize],
) -> Result<f64> {
    let batch = task.batch(indices);
    let preds = Gcn.predict(params, &batch.inputs)?;
    spearman(&preds, &batch.targets)
}

/// Support/test partition of a target for one run: a uniformly random
/// `n_finetune` support, every other record for testing.
pub fn target_split(
    len: usize,
    n_finetune: usize,
    run_seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_finetune + 2 > len {
        return Err(Error::Size(format!(
            "target has {len} records; {n_finetune} fine-tuning records leave fewer than 2 to test on"
        )));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut seed::rng(seed::derive_named(run_seed, "target-split")));
    let test = order.split_off(n_finetune);
    Ok((order, test))
}

/// Meta-test one initialization on one run: fine-tune on the support (none
/// for zero-shot) and correlate predictions with truth on the rest.
pub fn finetune_and_score(
    theta: &GcnParams,
    target: &EncodedTask<EncodedGraph>,
    n_finetune: usize,
    cfg: &MetaConfig,
    run_seed: u64,
) -> Result<f64> {
    if n_finetune == 0 {
        let all: Vec<usize> = (0..target.len()).collect();
        return rho_on(theta, target, &all);
    }
    let (support, test) = target_split(target.len(), n_finetune, run_seed)?;
    let tuned = meta_test_finetune(&Gcn, theta, &target.batch(&support), cfg)?;
    rho_on(&tuned.params, target, &test)
}

/// Fresh initialization trained with AdamW on the support only.
pub fn random_init_score(
    target: &EncodedTask<EncodedGraph>,
    vocab_size: usize,
    n_finetune: usize,
    cfg: &EvalConfig,
    run_seed: u64,
) -> Result<f64> {
    let mut rng = seed::rng(seed::derive_named(run_seed, "random-init"));
    let mut params = init_params(&cfg.meta.predictor, vocab_size, &mut rng)?;
    if n_finetune == 0 {
        let all: Vec<usize> = (0..target.len()).collect();
        return rho_on(&params, target, &all);
    }
    let (support, test) = target_split(target.len(), n_finetune, run_seed)?;
    let s = &cfg.supervised;
    supervised_train(
        &Gcn,
        &mut params,
        &target.batch(&support),
        s.epochs,
        s.batch_size,
        s.learning_rate,
        s.weight_decay,
        &mut rng,
    )?;
    rho_on(&params, target, &test)
}

/// Supervised pre-training of a fresh predictor on a whole source task.
pub fn pretrain_on(
    source: &EncodedTask<EncodedGraph>,
    vocab_size: usize,
    cfg: &EvalConfig,
    seed_: u64,
) -> Result<GcnParams> {
    let mut rng = seed::rng(seed_);
    let mut params = init_params(&cfg.meta.predictor, vocab_size, &mut rng)?;
    let s = &cfg.supervised;
    supervised_train(
        &Gcn,
        &mut params,
        &source.full_batch(),
        s.epochs,
        s.batch_size,
        s.learning_rate,
        s.weight_decay,
        &mut rng,
    )?;
    Ok(params)
}

fn run_seeds(master: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|r| seed::derive(master, r)).collect()
}

fn target_of<'c>(collection: &'c TaskCollection, target: &str) -> Result<&'c TaskTable> {
    collection
        .get(target)
        .ok_or_else(|| Error::Input(format!("target task `{target}` is not in the collection")))
}

/// Meta-trains on every task except `target` with the stage seed derived
/// from `master`.
pub fn meta_train_excluding(
    collection: &TaskCollection,
    target: &str,
    cfg: &MetaConfig,
    master: u64,
) -> Result<GcnParams> {
    let sources = collection.without(target);
    let mut rng = seed::rng(seed::derive_named(master, "meta-train"));
    Ok(meta_train(&sources, cfg, &mut rng)?.params)
}

/// Leave-one-out transfer to `target`, `cfg.runs` runs with sub-seeds of
/// `master`.
pub fn loo_transfer_eval(
    collection: &TaskCollection,
    target: &str,
    mode: SourceMode,
    cfg: &EvalConfig,
    master: u64,
) -> Result<EvalReport> {
    cfg.validate()?;
    let table = target_of(collection, target)?;
    let vocab = collection_vocab_size(collection)?;
    let encoded = EncodedTask::from_table(table)?;
    let seeds = run_seeds(master, cfg.runs);
    let per_run: Vec<f64> = match mode {
        SourceMode::Meta => {
            let theta = meta_train_excluding(collection, target, &cfg.meta, master)?;
            seeds
                .par_iter()
                .map(|&s| finetune_and_score(&theta, &encoded, cfg.n_finetune, &cfg.meta, s))
                .collect::<Result<_>>()?
        }
        SourceMode::Random => seeds
            .par_iter()
            .map(|&s| random_init_score(&encoded, vocab, cfg.n_finetune, cfg, s))
            .collect::<Result<_>>()?,
        SourceMode::Naive => {
            let sources: Vec<_> = collection
                .without(target)
                .tables()
                .iter()
                .map(EncodedTask::from_table)
                .collect::<Result<_>>()?;
            if sources.is_empty() {
                return Err(Error::Config(
                    "naive transfer needs at least one source task".into(),
                ));
            }
            let pretrained: Vec<GcnParams> = sources
                .par_iter()
                .enumerate()
                .map(|(i, src)| {
                    pretrain_on(
                        src,
                        vocab,
                        cfg,
                        seed::derive(seed::derive_named(master, "naive"), i as u64),
                    )
                })
                .collect::<Result<_>>()?;
            seeds
                .par_iter()
                .map(|&s| {
                    let scores = pretrained
                        .iter()
                        .map(|theta| {
                            finetune_and_score(theta, &encoded, cfg.n_finetune, &cfg.meta, s)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
                })
                .collect::<Result<_>>()?
        }
    };
    let protocol = match mode {
        SourceMode::Meta => "loo-meta",
        SourceMode::Random => "loo-random",
        SourceMode::Naive => "loo-naive",
    };
    Ok(EvalReport {
        protocol: protocol.into(),
        rows: vec![EvalRow {
            target: target.to_string(),
            stats: RunStats::from_runs(per_run),
        }],
        seeds,
        config: serde_json::to_value(cfg).expect("serializable config"),
    })
}

/// Default fine-tuning counts of the ablation.
pub const DEFAULT_ABLATION_COUNTS: [usize; 4] = [0, 5, 25, 50];

/// Mean Spearman on `target` against the number of fine-tuning records, all
/// counts sharing one meta-trained initialization and the same run seeds.
pub fn finetune_count_ablation(
    collection: &TaskCollection,
    target: &str,
    counts: &[usize],
    cfg: &EvalConfig,
    master: u64,
) -> Result<SweepCurve> {
    ablation(collection, target, counts, cfg, master, None)
}

/// [`finetune_count_ablation`] starting from a given initialization instead
/// of meta-training one.
pub fn finetune_count_ablation_from(
    theta: &GcnParams,
    collection: &TaskCollection,
    target: &str,
    counts: &[usize],
    cfg: &EvalConfig,
    master: u64,
) -> Result<SweepCurve> {
    ablation(collection, target, counts, cfg, master, Some(theta))
}

fn ablation(
    collection: &TaskCollection,
    target: &str,
    counts: &[usize],
    cfg: &EvalConfig,
    master: u64,
    init: Option<&GcnParams>,
) -> Result<SweepCurve> {
    cfg.validate()?;
    if counts.is_empty() || counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input(format!(
            "fine-tune counts must be nonempty and strictly ascending, got {counts:?}"
        )));
    }
    let table = target_of(collection, target)?;
    let max = *counts.last().expect("nonempty");
    if max + 2 > table.len() {
        return Err(Error::Input(format!(
            "fine-tune count {max} leaves fewer than 2 of {} target records to test on",
            table.len()
        )));
    }
    let encoded = EncodedTask::from_table(table)?;
    let theta = match init {
        Some(t) => t.clone(),
        None => meta_train_excluding(collection, target, &cfg.meta, master)?,
    };
    let seeds = run_seeds(master, cfg.runs);
    let points = counts
        .iter()
        .map(|&count| {
            let per_run = seeds
                .par_iter()
                .map(|&s| finetune_and_score(&theta, &encoded, count, &cfg.meta, s))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepPoint {
                x: count as f64,
                param: count as f64,
                stats: RunStats::from_runs(per_run),
                baseline: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepCurve {
        name: format!("finetune-count-ablation:{target}"),
        x_label: "n_finetune".into(),
        points,
        seeds,
        config: serde_json::to_value(cfg).expect("serializable config"),
    })
}

/// Transfer of a given initialization to `target`: fine-tune on each run's
/// support and score the rest, as the meta mode does after meta-training.
pub fn transfer_eval_from(
    theta: &GcnParams,
    collection: &TaskCollection,
    target: &str,
    cfg: &EvalConfig,
    master: u64,
) -> Result<EvalReport> {
    cfg.validate()?;
    let encoded = EncodedTask::from_table(target_of(collection, target)?)?;
    let seeds = run_seeds(master, cfg.runs);
    let per_run = seeds
        .par_iter()
        .map(|&s| finetune_and_score(theta, &encoded, cfg.n_finetune, &cfg.meta, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        protocol: "transfer-checkpoint".into(),
        rows: vec![EvalRow {
            target: target.to_string(),
            stats: RunStats::from_runs(per_run),
        }],
        seeds,
        config: serde_json::to_value(cfg).expect("serializable config"),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::nas_data::{make_noise_task, normalize_scores, synthetic_table, SyntheticObjective};
    use crate::predictor::{Activation, GcnConfig};
    use crate::search_space::{SearchSpaceDef, Template};

    fn collection(n_tasks: usize) -> TaskCollection {
        let space = Arc::new(SearchSpaceDef::mixed_ops("m4", Template::four_slot()));
        let mut rng = seed::rng(4);
        let obj = SyntheticObjective::random(space, 0.5, &mut rng);
        let base =
            normalize_scores(&synthetic_table(&obj, "base", Some(100), &mut rng).unwrap()).unwrap();
        let tables = (0..n_tasks)
            .map(|i| make_noise_task(&base, 0.3, i as u64).unwrap())
            .collect();
        TaskCollection::new(tables).unwrap()
    }

    fn tiny(runs: usize) -> EvalConfig {
        EvalConfig {
            meta: MetaConfig {
                epochs: 3,
                n_val: 10,
                finetune_grid: vec![5],
                predictor: GcnConfig {
                    num_hidden_layers: 1,
                    width: 8,
                    dropout_rate: 0.0,
                    activation: Activation::Relu,
                },
                ..Default::default()
            },
            supervised: SupervisedConfig {
                epochs: 3,
                ..Default::default()
            },
            runs,
            n_finetune: 5,
        }
    }

    fn id(c: &TaskCollection, i: usize) -> String {
        c.tables()[i].task_id().to_string()
    }

    #[test]
    fn single_run_reports_zero_stderr() {
        let c = collection(2);
        let r = loo_transfer_eval(&c, &id(&c, 1), SourceMode::Random, &tiny(1), 5).unwrap();
        assert_eq!(r.rows[0].stats.runs, 1);
        assert_eq!(r.rows[0].stats.stderr, 0.0);
        assert!(r.rows[0].stats.single_run);
        assert_eq!(r.seeds.len(), 1);
    }

    #[test]
    fn all_modes_run_and_are_reproducible() {
        let c = collection(3);
        for mode in [SourceMode::Meta, SourceMode::Random, SourceMode::Naive] {
            let a = loo_transfer_eval(&c, &id(&c, 0), mode, &tiny(2), 11).unwrap();
            let b = loo_transfer_eval(&c, &id(&c, 0), mode, &tiny(2), 11).unwrap();
            assert_eq!(a, b);
            assert!((-1.0..=1.0).contains(&a.rows[0].stats.mean));
        }
    }

    #[test]
    fn unknown_target() {
        let c = collection(2);
        assert!(matches!(
            loo_transfer_eval(&c, "nope", SourceMode::Random, &tiny(1), 0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn ablation_contract() {
        let c = collection(2);
        let target = id(&c, 1);
        assert!(matches!(
            finetune_count_ablation(&c, &target, &[5, 0], &tiny(2), 1),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            finetune_count_ablation(&c, &target, &[0, 99], &tiny(2), 1),
            Err(Error::Input(_))
        ));
        let a = finetune_count_ablation(&c, &target, &[0, 5], &tiny(2), 1).unwrap();
        let zero = &a.points[0].stats.per_run;
        assert_eq!(zero[0], zero[1]);
        let b = finetune_count_ablation(&c, &target, &[0, 5], &tiny(3), 1).unwrap();
        assert_eq!(b.points[0].stats.per_run[0], zero[0]);
    }

    #[test]
    fn target_split_partitions() {
        let (s, t) = target_split(20, 5, 3).unwrap();
        assert_eq!(s.len(), 5);
        let mut all: Vec<_> = s.iter().chain(&t).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert!(target_split(6, 5, 3).is_err());
    }
}
