use std::ops::Range;

use rand::Rng as _;

use super::*;
use crate::nas_data::{
    make_synthetic_ground_truth, normalize_scores, synthetic_table, SyntheticObjective,
    TaskCollection,
};
use crate::predictor::{
    init_params, Activation, Gcn, GcnConfig, OptimizerState, Parameters, Regressor,
};
use crate::search_space::{SearchSpaceDef, Template};
use crate::seed::{self, Rng};
use crate::{Error, Result};

/// `f(x) = w·x + b`; `b` is the head.
#[derive(Debug, Clone, PartialEq)]
struct Lin(Vec<f64>);

impl Parameters for Lin {
    fn values(&self) -> &[f64] {
        &self.0
    }
    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
    fn head_range(&self) -> Range<usize> {
        1..2
    }
    fn zeros_like(&self) -> Self {
        Lin(vec![0.0; 2])
    }
}

struct Linear;

impl Regressor for Linear {
    type Params = Lin;
    type Input = f64;

    fn loss_grad(
        &self,
        p: &Lin,
        xs: &[&f64],
        ts: &[f64],
        _: Option<&mut Rng>,
    ) -> Result<(f64, Lin)> {
        let n = xs.len() as f64;
        let (mut l, mut gw, mut gb) = (0.0, 0.0, 0.0);
        for (&&x, &t) in xs.iter().zip(ts) {
            let r = p.0[0] * x + p.0[1] - t;
            l += r * r / n;
            gw += 2.0 * r * x / n;
            gb += 2.0 * r / n;
        }
        Ok((l, Lin(vec![gw, gb])))
    }

    fn loss_hvp(&self, _: &Lin, xs: &[&f64], _: &[f64], v: &Lin) -> Result<Lin> {
        let n = xs.len() as f64;
        let sxx: f64 = xs.iter().map(|&&x| 2.0 * x * x / n).sum();
        let sx: f64 = xs.iter().map(|&&x| 2.0 * x / n).sum();
        Ok(Lin(vec![
            sxx * v.0[0] + sx * v.0[1],
            sx * v.0[0] + 2.0 * v.0[1],
        ]))
    }

    fn predict(&self, p: &Lin, xs: &[&f64]) -> Result<Vec<f64>> {
        Ok(xs.iter().map(|&&x| p.0[0] * x + p.0[1]).collect())
    }
}

fn cfg(algorithm: Algorithm, inner_steps: usize) -> MetaConfig {
    MetaConfig {
        algorithm,
        inner_steps,
        inner_lr: 0.1,
        outer_lr: 0.01,
        tasks_per_iter: 1,
        ..Default::default()
    }
}

#[test]
fn zero_inner_steps_is_identity() {
    let xs = [1.0, 2.0];
    let b = Batch::new(xs.iter().collect(), vec![3.0, 5.0]);
    let init = Lin(vec![0.3, -0.2]);
    let out = inner_adapt(&Linear, &init, &b, &cfg(Algorithm::Maml, 0), None, "t").unwrap();
    assert_eq!(out, init);
}

#[test]
fn single_step_closed_form() {
    // f = w·x + b on {(1, 3), (2, 5)} at (w, b) = (0.5, 0):
    // residuals −2.5, −4; gw = (2·−2.5·1 + 2·−4·2)/2 = −10.5; gb = −6.5.
    let xs = [1.0, 2.0];
    let b = Batch::new(xs.iter().collect(), vec![3.0, 5.0]);
    let out = inner_adapt(
        &Linear,
        &Lin(vec![0.5, 0.0]),
        &b,
        &cfg(Algorithm::Maml, 1),
        None,
        "t",
    )
    .unwrap();
    assert!((out.0[0] - (0.5 + 0.1 * 10.5)).abs() < 1e-14);
    assert!((out.0[1] - 0.65).abs() < 1e-14);
    let boil = inner_adapt(
        &Linear,
        &Lin(vec![0.5, 0.0]),
        &b,
        &cfg(Algorithm::Boil, 1),
        None,
        "t",
    )
    .unwrap();
    assert_eq!(boil.0[1], 0.0);
    let anil = inner_adapt(
        &Linear,
        &Lin(vec![0.5, 0.0]),
        &b,
        &cfg(Algorithm::Anil, 1),
        None,
        "t",
    )
    .unwrap();
    assert_eq!(anil.0[0], 0.5);
}

#[test]
fn divergence_reports_step() {
    let xs = [1e200, 1.0];
    let b = Batch::new(xs.iter().collect(), vec![1.0, 0.0]);
    let err = inner_adapt(
        &Linear,
        &Lin(vec![1e200, 0.0]),
        &b,
        &cfg(Algorithm::Maml, 3),
        None,
        "task-x",
    )
    .unwrap_err();
    match err {
        Error::Divergence { task, step } => {
            assert_eq!(task, "task-x");
            assert_eq!(step, 0);
        }
        other => panic!("{other}"),
    }
}

#[test]
fn first_order_outer_step_two_step_closed_form() {
    // Support = query = {(1, t)}: g(θ) = 2(w + b − t)·(1, 1), so one inner
    // step scales the residual by (1 − 4α); the first-order outer gradient
    // g(θ') then drives one AdamW step whose first update is lr·sign.
    let xs = [1.0];
    let t = 2.0;
    let c = MetaConfig {
        weight_decay: 0.0,
        ..cfg(Algorithm::Maml, 1)
    };
    let theta = Lin(vec![0.25, 0.5]);
    let r0 = theta.0[0] + theta.0[1] - t;
    let r1 = r0 * (1.0 - 4.0 * c.inner_lr);
    let g1 = 2.0 * r1;
    let mut state = MetaState::new(theta.clone(), &c);
    let task = TaskSplit {
        task_id: "q".into(),
        support: Batch::new(xs.iter().collect(), vec![t]),
        query: Batch::new(xs.iter().collect(), vec![t]),
    };
    let loss = outer_step(&Linear, &mut state, &[task], &c, &mut seed::rng(0)).unwrap();
    assert!((loss - r1 * r1).abs() < 1e-14);
    for i in 0..2 {
        let expected = theta.0[i] - c.outer_lr * g1 / (g1.abs() + 1e-8);
        assert!((state.params.0[i] - expected).abs() < 1e-14);
    }
    assert_eq!(state.history, vec![loss]);
}

fn meta_objective(
    theta: &Lin,
    support: &Batch<'_, f64>,
    query: &Batch<'_, f64>,
    c: &MetaConfig,
) -> f64 {
    let adapted = inner_adapt(&Linear, theta, support, c, None, "t").unwrap();
    Linear
        .loss_grad(&adapted, &query.inputs, &query.targets, None)
        .unwrap()
        .0
}

#[test]
fn second_order_matches_meta_objective_differences() {
    let sx = [0.5, -1.0, 2.0];
    let qx = [1.5, 0.3];
    let support = Batch::new(sx.iter().collect(), vec![1.0, -0.5, 2.0]);
    let query = Batch::new(qx.iter().collect(), vec![0.7, 0.1]);
    for (algorithm, steps) in [
        (Algorithm::Maml, 1),
        (Algorithm::Maml, 4),
        (Algorithm::Boil, 3),
        (Algorithm::Anil, 2),
    ] {
        let c = MetaConfig {
            second_order: true,
            ..cfg(algorithm, steps)
        };
        let theta = Lin(vec![0.4, -0.3]);
        let task = TaskSplit {
            task_id: "t".into(),
            support: support.clone(),
            query: query.clone(),
        };
        let (_, g) = task_meta_gradient(&Linear, &theta, &task, &c, 0).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut up = theta.clone();
            up.0[i] += h;
            let mut down = theta.clone();
            down.0[i] -= h;
            let fd = (meta_objective(&up, &support, &query, &c)
                - meta_objective(&down, &support, &query, &c))
                / (2.0 * h);
            assert!(
                (g.0[i] - fd).abs() < 1e-7,
                "{algorithm:?}/{steps} param {i}: {} vs {fd}",
                g.0[i]
            );
        }
    }
}

#[test]
fn second_order_one_parameter_closed_form() {
    // Only w is adapted (BOIL freezes b = head). With one step the
    // meta-gradient on w is (1 − α·h)·g_query(θ'), h = mean 2x².
    let sx = [1.0, 3.0];
    let support = Batch::new(sx.iter().collect(), vec![0.0, 1.0]);
    let query = Batch::new(vec![&2.0], vec![1.0]);
    let c = MetaConfig {
        second_order: true,
        ..cfg(Algorithm::Boil, 1)
    };
    let theta = Lin(vec![0.2, 0.0]);
    let task = TaskSplit {
        task_id: "t".into(),
        support: support.clone(),
        query: query.clone(),
    };
    let (_, g) = task_meta_gradient(&Linear, &theta, &task, &c, 0).unwrap();
    let adapted = inner_adapt(&Linear, &theta, &support, &c, None, "t").unwrap();
    let gq = Linear
        .loss_grad(&adapted, &query.inputs, &query.targets, None)
        .unwrap()
        .1;
    let h = (2.0 * 1.0 + 2.0 * 9.0) / 2.0;
    assert!((g.0[0] - (1.0 - c.inner_lr * h) * gq.0[0]).abs() < 1e-12);
    let first = task_meta_gradient(
        &Linear,
        &theta,
        &task,
        &MetaConfig {
            second_order: false,
            ..c.clone()
        },
        0,
    )
    .unwrap()
    .1;
    assert!((first.0[0] - gq.0[0]).abs() < 1e-15);
}

#[test]
fn inner_steps_zero_outer_step_equals_supervised_adamw() {
    let xs = [0.5, 1.0, -2.0];
    let c = cfg(Algorithm::Boil, 0);
    let theta = Lin(vec![0.1, 0.9]);
    let query = Batch::new(xs.iter().collect(), vec![1.0, 0.0, 3.0]);
    let mut state = MetaState::new(theta.clone(), &c);
    let task = TaskSplit {
        task_id: "t".into(),
        support: Batch::new(vec![&1.0], vec![2.0]),
        query: query.clone(),
    };
    outer_step(&Linear, &mut state, &[task], &c, &mut seed::rng(3)).unwrap();
    let mut p = theta;
    let g = Linear
        .loss_grad(&p, &query.inputs, &query.targets, None)
        .unwrap()
        .1;
    let mut opt = OptimizerState::adamw(c.outer_lr, c.weight_decay, 2);
    opt.step(&mut p, &g).unwrap();
    assert_eq!(state.params, p);
}

#[test]
fn identical_tasks_sum_linearly() {
    let xs = [0.5, 1.0, -2.0];
    let c = cfg(Algorithm::Maml, 3);
    let theta = Lin(vec![0.1, 0.9]);
    let make = || TaskSplit {
        task_id: "t".into(),
        support: Batch::new(xs.iter().collect(), vec![1.0, 0.0, 3.0]),
        query: Batch::new(xs.iter().collect(), vec![1.0, 0.5, 3.0]),
    };
    let (_, single) = task_meta_gradient(&Linear, &theta, &make(), &c, 0).unwrap();
    let mut sum = theta.zeros_like();
    for _ in 0..4 {
        let (_, g) = task_meta_gradient(&Linear, &theta, &make(), &c, 0).unwrap();
        loops::add_scaled(&mut sum, 1.0, &g);
    }
    for i in 0..2 {
        assert!((sum.0[i] - 4.0 * single.0[i]).abs() < 1e-12);
    }
}

fn small_gcn(dropout: f64) -> GcnConfig {
    GcnConfig {
        num_hidden_layers: 2,
        width: 16,
        dropout_rate: dropout,
        activation: Activation::Relu,
    }
}

fn synthetic_collection(n_tasks: usize, seed_: u64) -> TaskCollection {
    let space = std::sync::Arc::new(SearchSpaceDef::mixed_ops("m4", Template::four_slot()));
    let mut rng = seed::rng(seed_);
    let tables = (0..n_tasks)
        .map(|i| {
            let objective = SyntheticObjective::random(space.clone(), 0.3, &mut rng);
            let t = synthetic_table(&objective, &format!("task{i}"), Some(120), &mut rng).unwrap();
            normalize_scores(&t).unwrap()
        })
        .collect();
    TaskCollection::new(tables).unwrap()
}

#[test]
fn boil_and_anil_freezing_on_gcn() {
    let collection = synthetic_collection(1, 7);
    let task = EncodedTask::from_table(&collection.tables()[0]).unwrap();
    for s in 0..10u64 {
        let mut rng = seed::rng(s);
        let init = init_params(&small_gcn(0.2), 14, &mut rng).unwrap();
        let idx: Vec<usize> = (0..8).map(|_| rng.random_range(0..task.len())).collect();
        let support = task.batch(&idx);
        let steps = 1 + (s as usize * 3) % 9;
        let boil = inner_adapt(
            &Gcn,
            &init,
            &support,
            &cfg(Algorithm::Boil, steps),
            Some(&mut rng),
            "t",
        )
        .unwrap();
        assert_eq!(boil.head_values(), init.head_values());
        assert_ne!(boil.body_values(), init.body_values());
        let anil = inner_adapt(
            &Gcn,
            &init,
            &support,
            &cfg(Algorithm::Anil, steps),
            Some(&mut rng),
            "t",
        )
        .unwrap();
        assert_eq!(anil.body_values(), init.body_values());
        assert_ne!(anil.head_values(), init.head_values());
    }
}

fn tiny_meta(epochs: usize) -> MetaConfig {
    MetaConfig {
        algorithm: Algorithm::Boil,
        inner_lr: 0.05,
        outer_lr: 3e-3,
        inner_steps: 2,
        tasks_per_iter: 2,
        n_finetune: 5,
        n_val: 16,
        epochs,
        finetune_grid: vec![0, 5, 10],
        predictor: small_gcn(0.1),
        ..Default::default()
    }
}

#[test]
fn zero_epochs_returns_init() {
    let collection = synthetic_collection(2, 1);
    let state = meta_train(&collection, &tiny_meta(0), &mut seed::rng(5)).unwrap();
    let init = init_params(&small_gcn(0.1), 14, &mut seed::rng(5)).unwrap();
    assert_eq!(state.params, init);
    assert!(state.history.is_empty());
}

#[test]
fn meta_train_is_deterministic() {
    let collection = synthetic_collection(3, 2);
    let a = meta_train(&collection, &tiny_meta(5), &mut seed::rng(9)).unwrap();
    let b = meta_train(&collection, &tiny_meta(5), &mut seed::rng(9)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
    assert_eq!(a.history.len(), 5);
    assert_eq!(a.iteration, 5);
}

#[test]
fn undersized_table_fails_before_training() {
    let collection = synthetic_collection(1, 3);
    let c = MetaConfig {
        n_val: 500,
        ..tiny_meta(3)
    };
    assert!(matches!(
        meta_train(&collection, &c, &mut seed::rng(0)),
        Err(Error::Config(_))
    ));
}

#[test]
fn linear_task_query_loss_decreases() {
    // Scores are exactly the indicator "slot 0 is conv3-d1".
    let space = std::sync::Arc::new(SearchSpaceDef::mixed_ops("m4", Template::four_slot()));
    let conv3 = space.vocab().id_of("conv3-d1").unwrap();
    let mut weights = vec![0.0; space.allowed_ops().len()];
    weights[space
        .allowed_ops()
        .iter()
        .position(|&o| o == conv3)
        .unwrap()] = 1.0;
    let mut improved = 0;
    for s in 0..10 {
        let mut rng = seed::rng(100 + s);
        let (table, _) =
            make_synthetic_ground_truth(space.clone(), &weights, 0.0, Some(300), &mut rng).unwrap();
        let collection = TaskCollection::new(vec![normalize_scores(&table).unwrap()]).unwrap();
        let c = MetaConfig {
            epochs: 60,
            predictor: small_gcn(0.0),
            ..tiny_meta(60)
        };
        let state = meta_train(&collection, &c, &mut rng).unwrap();
        let first: f64 = state.history[..5].iter().sum();
        let last: f64 = state.history[state.history.len() - 5..].iter().sum();
        if last < first {
            improved += 1;
        }
    }
    assert!(improved >= 9, "improved in {improved}/10 seeds");
}

#[test]
fn finetune_grid_zero_returns_theta() {
    let collection = synthetic_collection(1, 4);
    let task = EncodedTask::from_table(&collection.tables()[0]).unwrap();
    let theta = init_params(&small_gcn(0.0), 14, &mut seed::rng(1)).unwrap();
    let c = MetaConfig {
        finetune_grid: vec![0],
        ..tiny_meta(0)
    };
    let out = meta_test_finetune(&Gcn, &theta, &task.batch(&[0, 1, 2, 3, 4]), &c).unwrap();
    assert_eq!(out.chosen_iters, 0);
    assert_eq!(out.params, theta);
}

#[test]
fn finetune_ties_choose_smaller_count() {
    // With x = 0 only the bias moves; every positive count yields the same
    // ordering of held-out predictions and hence the same CV score.
    let xs = [0.0; 4];
    let support = Batch::new(xs.iter().collect(), vec![1.0, 3.0, 2.0, 5.0]);
    let c = MetaConfig {
        finetune_grid: vec![20, 7],
        ..cfg(Algorithm::Maml, 1)
    };
    let out = meta_test_finetune(&Linear, &Lin(vec![0.0, 0.0]), &support, &c).unwrap();
    assert_eq!(out.cv_scores[0].1, out.cv_scores[1].1);
    assert_eq!(out.chosen_iters, 7);
}

#[test]
fn finetune_rejects_degenerate_support() {
    let xs = [0.0, 1.0, 2.0];
    let support = Batch::new(xs.iter().collect(), vec![1.0; 3]);
    let c = cfg(Algorithm::Maml, 1);
    assert!(matches!(
        meta_test_finetune(&Linear, &Lin(vec![0.0, 0.0]), &support, &c),
        Err(Error::Degenerate(_))
    ));
    let one = Batch::new(vec![&1.0], vec![1.0]);
    assert!(matches!(
        meta_test_finetune(&Linear, &Lin(vec![0.0, 0.0]), &one, &c),
        Err(Error::Size(_))
    ));
}

#[test]
fn boil_finetune_keeps_head() {
    let collection = synthetic_collection(1, 5);
    let task = EncodedTask::from_table(&collection.tables()[0]).unwrap();
    let theta = init_params(&small_gcn(0.0), 14, &mut seed::rng(2)).unwrap();
    let out = meta_test_finetune(
        &Gcn,
        &theta,
        &task.batch(&(0..10).collect::<Vec<_>>()),
        &tiny_meta(0),
    )
    .unwrap();
    assert_eq!(out.params.head_values(), theta.head_values());
}

#[test]
fn larger_support_chooses_at_least_as_many_iterations() {
    let space = std::sync::Arc::new(SearchSpaceDef::mixed_ops("m4", Template::four_slot()));
    let vocab = space.vocab().clone();
    let mut wins = 0;
    for s in 0..10 {
        let mut rng = seed::rng(300 + s);
        let objective = SyntheticObjective::random(space.clone(), 0.0, &mut rng);
        let table = synthetic_table(&objective, "t", Some(200), &mut rng).unwrap();
        let table = normalize_scores(&table).unwrap();
        let task = EncodedTask::from_table(&table).unwrap();
        let theta = init_params(&small_gcn(0.0), vocab.len(), &mut rng).unwrap();
        let c = MetaConfig {
            algorithm: Algorithm::Maml,
            inner_lr: 0.2,
            finetune_lr_scale: 0.5,
            ..tiny_meta(0)
        };
        let c = MetaConfig {
            finetune_grid: vec![5, 10, 20, 50, 100],
            ..c
        };
        let small =
            meta_test_finetune(&Gcn, &theta, &task.batch(&(0..5).collect::<Vec<_>>()), &c).unwrap();
        let large = meta_test_finetune(&Gcn, &theta, &task.batch(&(0..50).collect::<Vec<_>>()), &c)
            .unwrap();
        if large.chosen_iters >= small.chosen_iters {
            wins += 1;
        }
    }
    assert!(
        wins > 5,
        "larger support chose >= iterations in {wins}/10 seeds"
    );
}
