//! Synthetic transferability studies.
//!
//! Every run permutes the base table: the first `meta_records` architectures
//! carry the meta-training tasks, the rest form the held-out task, of which
//! `n_finetune` records are used for fine-tuning and the remainder for
//! testing. Sub-seeds depend only on the run seed, the stage name and the
//! task index, so that different grid points and different study kinds
//! share their randomness wherever their task sets coincide.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::pearson;
use super::protocols::{rho_on, EvalConfig, SupervisedConfig};
use super::report::{RunStats, SweepCurve, SweepPoint};
use crate::meta_learner::{
    meta_test_finetune, meta_train, supervised_train, EncodedTask, MetaConfig,
};
use crate::nas_data::{make_noise_task, make_pure_noise_task, TaskCollection, TaskTable};
use crate::predictor::{init_params, Gcn};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StudyKind {
    /// Sweep the noise level σ of the meta-training and held-out tasks.
    A,
    /// Sweep the number of meta-training tasks at fixed σ.
    B,
    /// Add pure-noise tasks to a fixed set of correlated tasks.
    C,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub kind: StudyKind,
    /// σ values (A), task counts (B) or pure-noise task counts (C).
    pub grid: Vec<f64>,
    /// Meta-training tasks in study A.
    pub n_tasks: usize,
    /// Fixed σ for studies B and C.
    pub sigma: f64,
    /// Correlated meta-training tasks in study C.
    pub n_correlated: usize,
    pub meta_records: usize,
    pub n_finetune: usize,
    pub runs: usize,
    /// Also score a fresh initialization trained on the same support.
    pub baseline: bool,
    pub meta: MetaConfig,
    pub supervised: SupervisedConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            kind: StudyKind::A,
            grid: vec![0.0, 0.5, 1.0, 2.0],
            n_tasks: 5,
            sigma: 0.5,
            n_correlated: 10,
            meta_records: 256,
            n_finetune: 5,
            runs: 10,
            baseline: true,
            meta: MetaConfig::default(),
            supervised: SupervisedConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        if self.grid.is_empty() {
            return Err(Error::Config("study grid must be nonempty".into()));
        }
        let mut sorted = self.grid.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("study grid has duplicate values".into()));
        }
        if self.grid.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::Config(
                "study grid values must be finite and >= 0".into(),
            ));
        }
        if matches!(self.kind, StudyKind::B | StudyKind::C)
            && self.grid.iter().any(|g| g.fract() != 0.0)
        {
            return Err(Error::Config("task-count grids must hold integers".into()));
        }
        if self.kind == StudyKind::B && self.grid.contains(&0.0) {
            return Err(Error::Config(
                "study B needs at least one meta-training task".into(),
            ));
        }
        if self.runs < 1 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.n_finetune < 2 {
            return Err(Error::Config(
                "studies fine-tune on at least 2 records".into(),
            ));
        }
        Ok(())
    }

    fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            meta: self.meta.clone(),
            supervised: self.supervised.clone(),
            runs: self.runs,
            n_finetune: self.n_finetune,
        }
    }
}

/// Tasks of one grid point.
struct PointTasks {
    meta: Vec<TaskTable>,
    held_out: TaskTable,
    /// Mean pairwise Pearson correlation of the generated correlated tasks.
    correlation: f64,
}

fn noise_seed(run_seed: u64, j: usize) -> u64 {
    seed::derive(seed::derive_named(run_seed, "noise-task"), j as u64)
}

fn build_point(
    base: &TaskTable,
    cfg: &StudyConfig,
    param: f64,
    run_seed: u64,
) -> Result<PointTasks> {
    let (sigma, n_corr, n_pure) = match cfg.kind {
        StudyKind::A => (param, cfg.n_tasks, 0),
        StudyKind::B => (cfg.sigma, param as usize, 0),
        StudyKind::C => (cfg.sigma, cfg.n_correlated, param as usize),
    };
    let mut correlated = (0..n_corr)
        .map(|j| make_noise_task(base, sigma, noise_seed(run_seed, j)))
        .collect::<Result<Vec<_>>>()?;
    let held_out = make_noise_task(base, sigma, seed::derive_named(run_seed, "held-out-noise"))?;
    let mut all: Vec<Vec<f64>> = correlated.iter().map(TaskTable::scores).collect();
    all.push(held_out.scores());
    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            sum += pearson(&all[i], &all[j]).unwrap_or(0.0);
            pairs += 1;
        }
    }
    let correlation = if pairs == 0 { 1.0 } else { sum / pairs as f64 };
    let pure_root = seed::derive_named(run_seed, "pure-noise-task");
    for j in 0..n_pure {
        correlated.push(make_pure_noise_task(
            base,
            seed::derive(pure_root, j as u64),
        )?);
    }
    Ok(PointTasks {
        meta: correlated,
        held_out,
        correlation,
    })
}

struct RunOutcome {
    rho: Vec<f64>,
    baseline: Vec<f64>,
    correlation: Vec<f64>,
}

fn run_once(base: &TaskTable, cfg: &StudyConfig, run_seed: u64) -> Result<RunOutcome> {
    let mut order: Vec<usize> = (0..base.len()).collect();
    order.shuffle(&mut seed::rng(seed::derive_named(run_seed, "permute")));
    let pool = order.split_off(cfg.meta_records);
    let meta_idx = order;
    let support_idx: Vec<usize> = (0..cfg.n_finetune).collect();
    let test_idx: Vec<usize> = (cfg.n_finetune..pool.len()).collect();
    let vocab = base.space().vocab().len();
    let eval_cfg = cfg.eval_config();

    let mut out = RunOutcome {
        rho: Vec::new(),
        baseline: Vec::new(),
        correlation: Vec::new(),
    };
    for &param in &cfg.grid {
        let tasks = build_point(base, cfg, param, run_seed)?;
        let meta_tables = tasks
            .meta
            .iter()
            .map(|t| t.subset(t.task_id().to_string(), &meta_idx))
            .collect::<Result<Vec<_>>>()?;
        let held_out = tasks
            .held_out
            .subset(tasks.held_out.task_id().to_string(), &pool)?;
        let target = EncodedTask::from_table(&held_out)?;
        let support = target.batch(&support_idx);

        let theta = if meta_tables.is_empty() {
            init_params(
                &cfg.meta.predictor,
                vocab,
                &mut seed::rng(seed::derive_named(run_seed, "meta-train")),
            )?
        } else {
            let collection = TaskCollection::new(meta_tables)?;
            let mut rng = seed::rng(seed::derive_named(run_seed, "meta-train"));
            meta_train(&collection, &cfg.meta, &mut rng)?.params
        };
        let tuned = meta_test_finetune(&Gcn, &theta, &support, &cfg.meta)?;
        out.rho.push(rho_on(&tuned.params, &target, &test_idx)?);
        out.correlation.push(tasks.correlation);

        if cfg.baseline {
            let mut rng = seed::rng(seed::derive_named(run_seed, "random-init"));
            let mut params = init_params(&cfg.meta.predictor, vocab, &mut rng)?;
            let s = &eval_cfg.supervised;
            supervised_train(
                &Gcn,
                &mut params,
                &support,
                s.epochs,
                s.batch_size,
                s.learning_rate,
                s.weight_decay,
                &mut rng,
            )?;
            out.baseline.push(rho_on(&params, &target, &test_idx)?);
        }
    }
    Ok(out)
}

/// Runs one synthetic study on a normalized base table.
///
/// Study A reports the measured mean pairwise Pearson correlation of the
/// generated tasks on the x axis (the σ that produced it is `param`); B and C
/// report the swept task count.
pub fn synthetic_study(base: &TaskTable, cfg: &StudyConfig, master: u64) -> Result<SweepCurve> {
    cfg.validate()?;
    if !base.is_normalized() {
        return Err(Error::Domain(format!(
            "study base `{}` must be normalized",
            base.task_id()
        )));
    }
    if cfg.meta_records + cfg.n_finetune + 2 > base.len() {
        return Err(Error::Size(format!(
            "base has {} records; the study needs {} meta-training + {} fine-tuning + 2 test records",
            base.len(),
            cfg.meta_records,
            cfg.n_finetune
        )));
    }
    let seeds: Vec<u64> = (0..cfg.runs as u64)
        .map(|r| seed::derive(master, r))
        .collect();
    let runs: Vec<RunOutcome> = seeds
        .par_iter()
        .map(|&s| run_once(base, cfg, s))
        .collect::<Result<_>>()?;
    let mut points: Vec<SweepPoint> = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(i, &param)| {
            let rho: Vec<f64> = runs.iter().map(|r| r.rho[i]).collect();
            let x = match cfg.kind {
                StudyKind::A => {
                    runs.iter().map(|r| r.correlation[i]).sum::<f64>() / runs.len() as f64
                }
                StudyKind::B | StudyKind::C => param,
            };
            SweepPoint {
                x,
                param,
                stats: RunStats::from_runs(rho),
                baseline: cfg
                    .baseline
                    .then(|| RunStats::from_runs(runs.iter().map(|r| r.baseline[i]).collect())),
            }
        })
        .collect();
    points.sort_by(|a, b| a.x.total_cmp(&b.x));
    if points.windows(2).any(|w| w[0].x >= w[1].x) {
        return Err(Error::Consistency(
            "two grid points produced the same measured task correlation".into(),
        ));
    }
    let (name, x_label) = match cfg.kind {
        StudyKind::A => ("study-A", "task_correlation"),
        StudyKind::B => ("study-B", "n_meta_tasks"),
        StudyKind::C => ("study-C", "n_noise_tasks"),
    };
    Ok(SweepCurve {
        name: name.into(),
        x_label: x_label.into(),
        points,
        seeds,
        config: serde_json::to_value(cfg).expect("serializable config"),
    })
}
