#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use mpnas_core::nas_data::{make_noise_task, normalize_scores, save_task_table, synthetic_table, SyntheticObjective};
use mpnas_core::search_space::{SearchSpaceDef, Template};
use mpnas_core::seed;
use serde_json::{json, Value};

pub fn m4() -> Arc<SearchSpaceDef> {
    Arc::new(SearchSpaceDef::mixed_ops("m4", Template::four_slot()))
}

/// Writes `n_tasks` tables of `records` records (one raw base, the rest
/// noisy normalized copies) and returns their paths.
pub fn write_tasks(dir: &Path, n_tasks: usize, records: usize) -> Vec<PathBuf> {
    let obj = SyntheticObjective::random(m4(), 0.5, &mut seed::rng(17));
    let raw = synthetic_table(&obj, "base", Some(records), &mut seed::rng(18)).unwrap();
    let base = normalize_scores(&raw).unwrap();
    let mut paths = Vec::new();
    for i in 0..n_tasks {
        let p = dir.join(format!("task{i}.json"));
        if i == 0 {
            save_task_table(&raw, &p).unwrap();
        } else {
            save_task_table(&make_noise_task(&base, 0.5, i as u64).unwrap(), &p).unwrap();
        }
        paths.push(p);
    }
    paths
}

/// Small and fast meta-learning settings.
pub fn tiny_meta() -> Value {
    json!({
        "epochs": 2,
        "n_val": 10,
        "finetune_grid": [0, 5],
        "predictor": {"num_hidden_layers": 1, "width": 8}
    })
}

pub fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

pub fn mpnas(args: &[&str]) -> Output {
    mpnas_env(args, &[])
}

pub fn mpnas_env(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mpnas"));
    cmd.args(args).env_remove("MPNAS_OUT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Files of `dir` other than the wall-time log, sorted by name.
pub fn result_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "run.log")
        .collect();
    v.sort();
    v
}

pub fn find(dir: &Path, suffix: &str) -> PathBuf {
    result_files(dir)
        .into_iter()
        .find(|p| p.to_string_lossy().ends_with(suffix))
        .unwrap_or_else(|| panic!("no *{suffix} in {}", dir.display()))
}

pub fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}
