mod common;

use std::sync::Arc;

use common::*;
use mpnas_cli::{run_eval, EvalOutcome, RunConfig};
use mpnas_core::evaluation::{loo_transfer_eval, EvalConfig, SourceMode, SupervisedConfig};
use mpnas_core::meta_learner::MetaConfig;
use mpnas_core::nas_data::{load_task_table, TaskCollection};
use mpnas_core::search_space::{OpVocabulary, SearchSpaceDef, Template};
use serde_json::json;

#[test]
fn validate_accepts_a_well_formed_config() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = write_tasks(dir.path(), 3, 60);
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({"tasks": tasks, "meta": tiny_meta(), "synth": {"base_records": 120, "meta_records": 60}}),
    );
    let o = mpnas(&["validate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn validate_names_a_missing_task_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({"tasks": ["nowhere/t.json"]}));
    let o = mpnas(&["validate", "meta-train", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nowhere/t.json"), "{}", stderr(&o));
}

#[test]
fn validate_reports_the_failing_record() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = write_tasks(dir.path(), 1, 10);
    let mut v = read_json(&tasks[0]);
    v["records"][3]["ops"] = json!([0, 1]);
    std::fs::write(&tasks[0], v.to_string()).unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({"tasks": tasks}));
    let o = mpnas(&["validate", "ingest", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("task0.json") && err.contains("record 3"), "{err}");
}

#[test]
fn undersized_table_is_a_preflight_error() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = write_tasks(dir.path(), 2, 12);
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({"tasks": tasks, "meta": tiny_meta(), "eval": {"mode": "random", "n_finetune": 20}}),
    );
    let v = mpnas(&["validate", "eval", "--config", cfg.to_str().unwrap()]);
    assert!(!v.status.success());
    assert!(stderr(&v).contains("12 records"), "{}", stderr(&v));
    let e = mpnas(&["eval", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!e.status.success());
    assert!(stderr(&e).contains("pre-flight"), "{}", stderr(&e));
    assert!(!out.join("eval").exists() && !out.exists(), "nothing is written");
}

#[test]
fn meta_train_writes_three_consistent_reproducible_files() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = write_tasks(dir.path(), 2, 40);
    let cfg = write_config(dir.path(), "c.json", &json!({"tasks": tasks, "meta": tiny_meta(), "seed": 5}));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = mpnas(&["meta-train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let files = result_files(&a);
    assert_eq!(files.len(), 3, "{files:?}");
    for f in &files {
        let other = b.join(f.file_name().unwrap());
        assert_eq!(std::fs::read(f).unwrap(), std::fs::read(other).unwrap(), "{}", f.display());
    }
    let manifest = read_json(&find(&a, ".json"));
    let csv = std::fs::read_to_string(find(&a, "-loss.csv")).unwrap();
    let last: f64 = csv.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(manifest["final_loss"].as_f64().unwrap(), last);
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(manifest["status"], "complete");
    assert!(a.join("run.log").exists());
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = write_tasks(dir.path(), 3, 40);
    let cfg = write_config(dir.path(), "c.json", &json!({"tasks": tasks, "meta": tiny_meta()}));
    let one = dir.path().join("one");
    let three = dir.path().join("three");
    for (out, jobs) in [(&one, "1"), (&three, "3")] {
        let o = mpnas(&["meta-train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        std::fs::read(find(&one, ".ckpt")).unwrap(),
        std::fs::read(find(&three, ".ckpt")).unwrap()
    );
}

#[test]
fn divergence_fails_and_keeps_the_partial_history() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = write_tasks(dir.path(), 2, 40);
    let mut meta = tiny_meta();
    meta["inner_lr"] = json!(1e200);
    let cfg = write_config(dir.path(), "c.json", &json!({"tasks": tasks, "meta": meta}));
    let out = dir.path().join("out");
    let o = mpnas(&["meta-train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("divergence"), "{}", stderr(&o));
    let manifest = read_json(&find(&out, ".json"));
    assert_eq!(manifest["status"], "failed");
    assert!(find(&out, "-loss.csv").exists());
    assert!(result_files(&out).iter().all(|p| p.extension().unwrap() != "ckpt"));
}

#[test]
fn synth_with_one_sigma_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({
            "meta": tiny_meta(),
            "synth": {"kind": "A", "grid": [0.5], "base_records": 120, "meta_records": 60, "runs": 2,
                      "supervised": {"epochs": 3}}
        }),
    );
    let out = dir.path().join("out");
    let o = mpnas(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(find(&out, ".csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
    assert!(csv.starts_with("task_correlation,"));
}

#[test]
fn search_on_a_single_architecture_space() {
    let dir = tempfile::tempdir().unwrap();
    let vocab = Arc::new(OpVocabulary::unified());
    let op = vocab.searchable().next().unwrap().name.clone();
    let space = SearchSpaceDef::new("one", Template::chain(1), &[&op], vocab).unwrap();
    let space_path = dir.path().join("space.json");
    space.save(&space_path).unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({"space": "space.json", "meta": tiny_meta()}));
    let out = dir.path().join("out");
    let o = mpnas(&["search", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(find(&out, ".csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
    let summary = read_json(&find(&out, ".json"));
    assert_eq!(summary["search"]["oracle_calls"], 1);
    assert_eq!(summary["search"]["final_percentile"], 0.0);
}

#[test]
fn random_search_over_a_table_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = write_tasks(dir.path(), 1, 30);
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({"search": {"method": "random", "oracle": {"kind": "table", "path": tasks[0]},
                           "config": {"total_steps": 5}}}),
    );
    let out = dir.path().join("out");
    let o = mpnas(&["search", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read_json(&find(&out, ".json"));
    assert_eq!(summary["search"]["oracle_calls"], 5);
}

#[test]
fn eval_random_mode_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = write_tasks(dir.path(), 2, 40);
    let cfg_json = json!({
        "tasks": tasks, "meta": tiny_meta(), "seed": 11,
        "eval": {"mode": "random", "runs": 3, "supervised": {"epochs": 5}}
    });
    let cfg = write_config(dir.path(), "c.json", &cfg_json);
    let out = dir.path().join("out");
    let o = mpnas(&["eval", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let written = read_json(&find(&out, ".json"))["result"].clone();

    let collection = TaskCollection::new(tasks.iter().map(|p| load_task_table(p).unwrap()).collect()).unwrap();
    let meta: MetaConfig = serde_json::from_value(tiny_meta()).unwrap();
    let ecfg = EvalConfig {
        meta,
        supervised: SupervisedConfig {
            epochs: 5,
            ..Default::default()
        },
        runs: 3,
        n_finetune: 5,
    };
    let target = collection.tables()[0].task_id().to_string();
    let report = loo_transfer_eval(&collection, &target, SourceMode::Random, &ecfg, 11).unwrap();
    assert_eq!(written, serde_json::to_value(&report).unwrap());

    let lib_cfg = RunConfig::load(&cfg).unwrap();
    let EvalOutcome::Report(again) = run_eval(&lib_cfg).unwrap() else {
        panic!("loo protocol yields a report")
    };
    assert_eq!(again, report);
}

#[test]
fn eval_ablation_from_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = write_tasks(dir.path(), 2, 40);
    let ckpt_dir = dir.path().join("ckpt");
    let train = write_config(dir.path(), "t.json", &json!({"tasks": [tasks[1]], "meta": tiny_meta()}));
    assert!(mpnas(&["meta-train", "--config", train.to_str().unwrap(), "--out", ckpt_dir.to_str().unwrap()]).status.success());
    let ckpt = find(&ckpt_dir, ".ckpt");
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({"tasks": tasks, "meta": tiny_meta(),
                "eval": {"protocol": "ablation", "counts": [0, 5, 10], "runs": 2, "checkpoint": ckpt}}),
    );
    let out = dir.path().join("out");
    let o = mpnas(&["eval", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(find(&out, ".csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "{csv}");
}

#[test]
fn ingest_normalizes_raw_tables() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = write_tasks(dir.path(), 2, 20);
    assert!(!load_task_table(&tasks[0]).unwrap().is_normalized());
    let cfg = write_config(dir.path(), "c.json", &json!({"tasks": tasks}));
    let out = dir.path().join("out");
    let o = mpnas(&["ingest", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files = result_files(&out);
    assert_eq!(files.len(), 2);
    assert!(files.iter().all(|f| load_task_table(f).unwrap().is_normalized()));
    let t = load_task_table(&files[0]).unwrap();
    assert!(files[0].to_string_lossy().contains("ingest-0-base-"));
    let mean = t.scores().iter().sum::<f64>() / t.len() as f64;
    assert!(mean.abs() < 1e-12, "{mean}");
}

#[test]
fn env_var_is_the_default_output_directory_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = write_tasks(dir.path(), 1, 20);
    let env_out = dir.path().join("env-out");
    let cfg = write_config(dir.path(), "c.json", &json!({"tasks": tasks, "seed": 1}));
    let o = mpnas_env(&["ingest", "--config", cfg.to_str().unwrap()], &[("MPNAS_OUT", &env_out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(result_files(&env_out).len(), 1);

    let flag_out = dir.path().join("flag-out");
    let o = mpnas_env(
        &["ingest", "--config", cfg.to_str().unwrap(), "--out", flag_out.to_str().unwrap(), "--seed", "2"],
        &[("MPNAS_OUT", &env_out)],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(result_files(&env_out).len(), 1);
    let names = |d: &std::path::Path| result_files(d)[0].file_name().unwrap().to_owned();
    assert_ne!(names(&env_out), names(&flag_out), "seed override changes the config digest");
}

#[test]
fn nothing_is_written_outside_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = write_tasks(dir.path(), 2, 40);
    let cfg = write_config(dir.path(), "c.json", &json!({"tasks": tasks, "meta": tiny_meta()}));
    let before = result_files(dir.path());
    let out = dir.path().join("out");
    assert!(mpnas(&["meta-train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let mut after = result_files(dir.path());
    after.retain(|p| p != &out);
    assert_eq!(before, after);
}
