use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use mpnas_core::evaluation::{
    finetune_count_ablation, finetune_count_ablation_from, loo_transfer_eval, synthetic_study, transfer_eval_from,
    EvalConfig, EvalReport, SourceMode, SweepCurve,
};
use mpnas_core::meta_learner::{collection_vocab_size, meta_preflight, meta_train, meta_train_partial};
use mpnas_core::nas_data::{
    load_task_table, normalize_scores, save_task_table, synthetic_table, SyntheticObjective, TaskCollection,
    TaskTable,
};
use mpnas_core::nas_search::{
    predictor_search, random_search, synthetic_oracle, tabular_oracle, Oracle, SearchHistory,
};
use mpnas_core::predictor::{init_params, load_checkpoint, save_checkpoint, GcnParams, Parameters};
use mpnas_core::search_space::{SearchSpaceDef, Template};
use mpnas_core::seed;
use serde_json::json;

use crate::config::{EvalProtocol, OracleSpec, RunConfig, SearchMethod};

/// Subcommands, in the order `validate` checks their sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    MetaTrain,
    Eval,
    Synth,
    Search,
    Ingest,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::MetaTrain,
        Command::Eval,
        Command::Synth,
        Command::Search,
        Command::Ingest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::MetaTrain => "meta-train",
            Command::Eval => "eval",
            Command::Synth => "synth",
            Command::Search => "search",
            Command::Ingest => "ingest",
        }
    }
}

/// Files written by one subcommand, in writing order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(path);
        Ok(())
    }

    fn write_json(&mut self, dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
        text.push('\n');
        self.write(dir, name, text.as_bytes())
    }
}

const DEFAULT_SPACE: &str = "mixed-ops-4slot";

pub fn load_space(cfg: &RunConfig) -> Result<Arc<SearchSpaceDef>> {
    Ok(Arc::new(match &cfg.space {
        Some(p) => SearchSpaceDef::load(p).with_context(|| format!("loading space {}", p.display()))?,
        None => SearchSpaceDef::mixed_ops(DEFAULT_SPACE, Template::four_slot()),
    }))
}

pub fn load_collection(cfg: &RunConfig) -> Result<TaskCollection> {
    if cfg.tasks.is_empty() {
        bail!("config lists no task tables (`tasks`)");
    }
    let tables = cfg
        .tasks
        .iter()
        .map(|p| load_task_table(p).with_context(|| format!("loading task table {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskCollection::new(tables)?)
}

fn target_id(cfg: &RunConfig, collection: &TaskCollection) -> String {
    cfg.eval
        .target
        .clone()
        .unwrap_or_else(|| collection.tables()[0].task_id().to_string())
}

fn eval_config(cfg: &RunConfig) -> EvalConfig {
    EvalConfig {
        meta: cfg.meta.clone(),
        supervised: cfg.eval.supervised.clone(),
        runs: cfg.eval.runs,
        n_finetune: cfg.eval.n_finetune,
    }
}

fn load_init(path: &Path, vocab_size: usize) -> Result<GcnParams> {
    let theta = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if theta.vocab_size() != vocab_size {
        bail!(
            "checkpoint {} was trained on a {}-entry vocabulary, the data uses {vocab_size}",
            path.display(),
            theta.vocab_size()
        );
    }
    Ok(theta)
}

/// Synthetic base table of the synth subcommand: the objective and the
/// record sample come from named stages of the master seed.
pub fn synthetic_base(cfg: &RunConfig) -> Result<TaskTable> {
    if let Some(p) = &cfg.synth.base_table {
        let t = load_task_table(p).with_context(|| format!("loading base table {}", p.display()))?;
        return Ok(if t.is_normalized() { t } else { normalize_scores(&t)? });
    }
    let space = load_space(cfg)?;
    let objective = synthetic_objective(cfg, space, cfg.synth.interaction);
    let mut rng = seed::rng(seed::derive_named(cfg.seed, "base-sample"));
    let raw = synthetic_table(&objective, "synthetic-base", Some(cfg.synth.base_records), &mut rng)?;
    Ok(normalize_scores(&raw)?)
}

pub fn synthetic_objective(cfg: &RunConfig, space: Arc<SearchSpaceDef>, interaction: f64) -> SyntheticObjective {
    SyntheticObjective::random(space, interaction, &mut seed::rng(seed::derive_named(cfg.seed, "objective")))
}


fn missing_paths(cfg: &RunConfig, command: Command) -> Vec<String> {
    let mut paths: Vec<&PathBuf> = cfg.space.iter().collect();
    match command {
        Command::MetaTrain => paths.extend(&cfg.tasks),
        Command::Eval => {
            paths.extend(&cfg.tasks);
            paths.extend(&cfg.eval.checkpoint);
        }
        Command::Synth => paths.extend(&cfg.synth.base_table),
        Command::Search => {
            paths.extend(&cfg.search.checkpoint);
            if cfg.search.checkpoint.is_none() {
                paths.extend(&cfg.tasks);
            }
            if let OracleSpec::Table { path } = &cfg.search.oracle {
                paths.push(path);
            }
        }
        Command::Ingest => {
            paths.extend(if cfg.ingest.inputs.is_empty() {
                &cfg.tasks
            } else {
                &cfg.ingest.inputs
            });
        }
    }
    paths
        .into_iter()
        .filter(|p| !p.exists())
        .map(|p| format!("missing file: {}", p.display()))
        .collect()
}

fn check_meta_train(cfg: &RunConfig) -> Result<()> {
    let collection = load_collection(cfg)?;
    meta_preflight(&collection, &cfg.meta).context("meta-training pre-flight")?;
    Ok(())
}

fn check_eval(cfg: &RunConfig) -> Result<()> {
    let ecfg = eval_config(cfg);
    ecfg.validate().context("eval config")?;
    let collection = load_collection(cfg)?;
    let target = target_id(cfg, &collection);
    let table = collection
        .get(&target)
        .ok_or_else(|| anyhow!("eval target `{target}` is not among the task tables"))?;
    let needed = match cfg.eval.protocol {
        EvalProtocol::Loo => cfg.eval.n_finetune,
        EvalProtocol::Ablation => {
            let c = &cfg.eval.counts;
            if c.is_empty() || c.windows(2).any(|w| w[0] >= w[1]) {
                bail!("eval counts must be nonempty and strictly ascending, got {c:?}");
            }
            *c.last().expect("nonempty")
        }
    };
    if needed + 2 > table.len() {
        bail!(
            "eval target `{target}` has {} records; fine-tuning on {needed} leaves fewer than 2 to test on",
            table.len()
        );
    }
    let sources = collection.without(&target);
    match (&cfg.eval.checkpoint, cfg.eval.mode) {
        (Some(p), SourceMode::Meta) => {
            load_init(p, collection_vocab_size(&collection)?)?;
        }
        (Some(_), mode) => bail!("eval checkpoint is only used in meta mode, mode is {mode:?}"),
        (None, SourceMode::Meta) => {
            if sources.is_empty() {
                bail!("leave-one-out meta transfer needs a source task besides `{target}`");
            }
            meta_preflight(&sources, &cfg.meta).context("meta-training pre-flight on the source tasks")?;
        }
        (None, SourceMode::Naive) if sources.is_empty() => {
            bail!("naive transfer needs a source task besides `{target}`")
        }
        (None, _) => {}
    }
    Ok(())
}

fn check_synth(cfg: &RunConfig) -> Result<()> {
    let study = cfg.synth.study(&cfg.meta);
    study.validate().context("synth config")?;
    let base_len = match &cfg.synth.base_table {
        Some(p) => load_task_table(p)
            .with_context(|| format!("loading base table {}", p.display()))?
            .len(),
        None => {
            let space = load_space(cfg)?;
            let size = space.count().context("synthetic base needs a countable space")?;
            if size < cfg.synth.base_records.into() {
                bail!("space has {size} cells, base_records is {}", cfg.synth.base_records);
            }
            cfg.synth.base_records
        }
    };
    if study.meta_records + study.n_finetune + 2 > base_len {
        bail!(
            "base has {base_len} records; meta_records {} + n_finetune {} leave fewer than 2 to test on",
            study.meta_records,
            study.n_finetune
        );
    }
    if study.meta_records < cfg.meta.n_finetune + cfg.meta.n_val {
        bail!(
            "meta_records {} is below meta.n_finetune + meta.n_val = {}",
            study.meta_records,
            cfg.meta.n_finetune + cfg.meta.n_val
        );
    }
    Ok(())
}

fn check_search(cfg: &RunConfig) -> Result<()> {
    cfg.search.config.validate().context("search config")?;
    cfg.meta.validate().context("meta config")?;
    let space = search_space(cfg)?;
    let vocab = space.vocab().len();
    if cfg.search.method == SearchMethod::Predictor {
        match &cfg.search.checkpoint {
            Some(p) => {
                load_init(p, vocab)?;
            }
            None if !cfg.tasks.is_empty() => {
                let collection = load_collection(cfg)?;
                meta_preflight(&collection, &cfg.meta).context("meta-training pre-flight")?;
                if collection_vocab_size(&collection)? != vocab {
                    bail!("task tables and search space use different vocabularies");
                }
            }
            None => {}
        }
    }
    Ok(())
}

fn check_ingest(cfg: &RunConfig) -> Result<()> {
    for p in ingest_inputs(cfg)? {
        load_task_table(p).with_context(|| format!("loading {}", p.display()))?;
    }
    Ok(())
}

fn check(cfg: &RunConfig, command: Command) -> Result<()> {
    match command {
        Command::MetaTrain => check_meta_train(cfg),
        Command::Eval => check_eval(cfg),
        Command::Synth => check_synth(cfg),
        Command::Search => check_search(cfg),
        Command::Ingest => check_ingest(cfg),
    }
}

/// Problems that would stop `commands` from running, one message per
/// problem, each naming the failing file (and record) where there is one.
/// Nothing is trained or written.
pub fn cmd_validate(cfg: &RunConfig, commands: &[Command]) -> Vec<String> {
    let mut problems = Vec::new();
    for &c in commands {
        let missing = missing_paths(cfg, c);
        if !missing.is_empty() {
            problems.extend(missing.into_iter().map(|m| format!("{}: {m}", c.name())));
            continue;
        }
        if let Err(e) = check(cfg, c) {
            problems.push(format!("{}: {e:#}", c.name()));
        }
    }
    problems.dedup();
    problems
}

fn preflight(cfg: &RunConfig, command: Command) -> Result<()> {
    let problems = cmd_validate(cfg, &[command]);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("pre-flight failed:\n  {}", problems.join("\n  ")))
    }
}


pub fn cmd_meta_train(cfg: &RunConfig) -> Result<Outputs> {
    preflight(cfg, Command::MetaTrain)?;
    let collection = load_collection(cfg)?;
    let mut rng = seed::rng(seed::derive_named(cfg.seed, "meta-train"));
    let (state, failure) = meta_train_partial(&collection, &cfg.meta, &mut rng).context("meta-training")?;

    let dir = cfg.out_dir();
    let stem = format!("meta-train-{}", cfg.digest());
    let mut out = Outputs::default();
    let mut csv = String::from("epoch,query_loss\n");
    for (i, loss) in state.history.iter().enumerate() {
        csv.push_str(&format!("{},{loss}\n", i + 1));
    }
    let loss_name = format!("{stem}-loss.csv");
    out.write(&dir, &loss_name, csv.as_bytes())?;

    let ckpt_name = format!("{stem}.ckpt");
    let mut manifest = json!({
        "protocol": "meta-train",
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "config": cfg.result_config(),
        "tasks": collection.tables().iter().map(|t| t.task_id()).collect::<Vec<_>>(),
        "vocab_size": state.params.vocab_size(),
        "parameters": state.params.values().len(),
        "epochs_completed": state.history.len(),
        "final_loss": state.history.last(),
        "loss_history": loss_name,
    });
    match failure {
        None => {
            let path = dir.join(&ckpt_name);
            save_checkpoint(&state.params, &path)?;
            out.files.push(path);
            manifest["checkpoint"] = json!(ckpt_name);
            manifest["status"] = json!("complete");
            out.write_json(&dir, &format!("{stem}.json"), &manifest)?;
            Ok(out)
        }
        Some(e) => {
            manifest["status"] = json!("failed");
            manifest["error"] = json!(e.to_string());
            out.write_json(&dir, &format!("{stem}.json"), &manifest)?;
            Err(anyhow!(e).context(format!(
                "meta-training failed after {} epochs; partial loss history in {}",
                state.history.len(),
                dir.join(loss_name).display()
            )))
        }
    }
}


pub enum EvalOutcome {
    Report(EvalReport),
    Curve(SweepCurve),
}

/// The library call behind `eval`.
pub fn run_eval(cfg: &RunConfig) -> Result<EvalOutcome> {
    let collection = load_collection(cfg)?;
    let target = target_id(cfg, &collection);
    let ecfg = eval_config(cfg);
    let init = match &cfg.eval.checkpoint {
        Some(p) => Some(load_init(p, collection_vocab_size(&collection)?)?),
        None => None,
    };
    let stage = |s: &str| format!("eval stage `{s}` on target `{target}`");
    Ok(match (cfg.eval.protocol, init) {
        (EvalProtocol::Loo, None) => EvalOutcome::Report(
            loo_transfer_eval(&collection, &target, cfg.eval.mode, &ecfg, cfg.seed)
                .with_context(|| stage("leave-one-out transfer"))?,
        ),
        (EvalProtocol::Loo, Some(theta)) => EvalOutcome::Report(
            transfer_eval_from(&theta, &collection, &target, &ecfg, cfg.seed)
                .with_context(|| stage("checkpoint transfer"))?,
        ),
        (EvalProtocol::Ablation, None) => EvalOutcome::Curve(
            finetune_count_ablation(&collection, &target, &cfg.eval.counts, &ecfg, cfg.seed)
                .with_context(|| stage("fine-tune-count ablation"))?,
        ),
        (EvalProtocol::Ablation, Some(theta)) => EvalOutcome::Curve(
            finetune_count_ablation_from(&theta, &collection, &target, &cfg.eval.counts, &ecfg, cfg.seed)
                .with_context(|| stage("fine-tune-count ablation"))?,
        ),
    })
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<Outputs> {
    preflight(cfg, Command::Eval)?;
    let (name, csv, body) = match run_eval(cfg)? {
        EvalOutcome::Report(r) => (r.protocol.clone(), r.to_csv(), serde_json::to_value(&r)?),
        EvalOutcome::Curve(c) => ("ablation".to_string(), c.to_csv(), serde_json::to_value(&c)?),
    };
    let stem = format!("eval-{name}-{}", cfg.digest());
    let dir = cfg.out_dir();
    let mut out = Outputs::default();
    out.write(&dir, &format!("{stem}.csv"), csv.as_bytes())?;
    out.write_json(&dir, &format!("{stem}.json"), &summary(cfg, "result", body))?;
    Ok(out)
}

fn summary(cfg: &RunConfig, key: &str, body: serde_json::Value) -> serde_json::Value {
    let mut v = json!({
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "config": cfg.result_config(),
    });
    v[key] = body;
    v
}


pub fn run_synth(cfg: &RunConfig) -> Result<SweepCurve> {
    let base = synthetic_base(cfg).context("synth stage `base table`")?;
    synthetic_study(&base, &cfg.synth.study(&cfg.meta), cfg.seed).context("synth stage `study`")
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<Outputs> {
    preflight(cfg, Command::Synth)?;
    let curve = run_synth(cfg)?;
    let stem = format!("synth-{}-{}", curve.name, cfg.digest());
    let dir = cfg.out_dir();
    let mut out = Outputs::default();
    out.write(&dir, &format!("{stem}.csv"), curve.to_csv().as_bytes())?;
    out.write_json(&dir, &format!("{stem}.json"), &summary(cfg, "curve", serde_json::to_value(&curve)?))?;
    Ok(out)
}


fn search_space(cfg: &RunConfig) -> Result<Arc<SearchSpaceDef>> {
    match &cfg.search.oracle {
        OracleSpec::Table { path } => Ok(load_task_table(path)
            .with_context(|| format!("loading oracle table {}", path.display()))?
            .space()
            .clone()),
        OracleSpec::Synthetic { .. } => load_space(cfg),
    }
}

fn build_oracle(cfg: &RunConfig, space: &Arc<SearchSpaceDef>) -> Result<Oracle> {
    Ok(match &cfg.search.oracle {
        OracleSpec::Table { path } => tabular_oracle(&load_task_table(path)?)?,
        OracleSpec::Synthetic { interaction } => {
            synthetic_oracle(synthetic_objective(cfg, space.clone(), *interaction))?
        }
    })
}

fn search_init(cfg: &RunConfig, space: &SearchSpaceDef) -> Result<GcnParams> {
    let vocab = space.vocab().len();
    if let Some(p) = &cfg.search.checkpoint {
        return load_init(p, vocab);
    }
    let mut rng = seed::rng(seed::derive_named(cfg.seed, "meta-train"));
    if cfg.tasks.is_empty() {
        return Ok(init_params(&cfg.meta.predictor, vocab, &mut rng)?);
    }
    let collection = load_collection(cfg)?;
    Ok(meta_train(&collection, &cfg.meta, &mut rng)
        .context("search stage `meta-training the initial predictor`")?
        .params)
}

/// The library calls behind `search`. A failed search still returns its
/// partial history next to the error.
pub fn run_search(cfg: &RunConfig) -> Result<(SearchHistory, Option<anyhow::Error>)> {
    let space = search_space(cfg)?;
    let mut oracle = build_oracle(cfg, &space).context("search stage `oracle`")?;
    let mut rng = seed::rng(seed::derive_named(cfg.seed, "search"));
    let result = match cfg.search.method {
        SearchMethod::Predictor => {
            let theta = search_init(cfg, &space)?;
            predictor_search(&space, &mut oracle, &theta, &cfg.search.config, &cfg.meta, &mut rng)
        }
        SearchMethod::Random => random_search(&space, &mut oracle, cfg.search.config.total_steps, &mut rng),
    };
    Ok(match result {
        Ok(h) => (h, None),
        Err(f) => {
            let f = *f;
            let msg = format!("search stage `oracle evaluation` after {} steps", f.partial.len());
            (f.partial, Some(anyhow!(f.error).context(msg)))
        }
    })
}

pub fn cmd_search(cfg: &RunConfig) -> Result<Outputs> {
    preflight(cfg, Command::Search)?;
    let (history, failure) = run_search(cfg)?;
    let method = match cfg.search.method {
        SearchMethod::Predictor => "predictor",
        SearchMethod::Random => "random",
    };
    let stem = format!("search-{method}-{}", cfg.digest());
    let dir = cfg.out_dir();
    let mut out = Outputs::default();
    out.write(&dir, &format!("{stem}.csv"), history.to_csv().as_bytes())?;
    let body = json!({
        "method": history.method,
        "oracle": history.oracle,
        "steps": history.len(),
        "oracle_calls": history.oracle_calls,
        "incumbent": history.incumbent,
        "final_percentile": history.final_percentile,
        "early_stop": history.early_stop,
        "refits": history.refits,
        "status": if failure.is_some() { "failed" } else { "complete" },
    });
    out.write_json(&dir, &format!("{stem}.json"), &summary(cfg, "search", body))?;
    match failure {
        None => Ok(out),
        Some(e) => Err(e),
    }
}


fn ingest_inputs(cfg: &RunConfig) -> Result<&[PathBuf]> {
    let inputs = if cfg.ingest.inputs.is_empty() {
        &cfg.tasks
    } else {
        &cfg.ingest.inputs
    };
    if inputs.is_empty() {
        bail!("nothing to ingest: `ingest.inputs` and `tasks` are empty");
    }
    Ok(inputs)
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Schema-checks each input, z-scores raw tables and re-emits them in the
/// canonical dataset format with an inline space.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<Outputs> {
    preflight(cfg, Command::Ingest)?;
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let mut out = Outputs::default();
    for (i, p) in ingest_inputs(cfg)?.iter().enumerate() {
        let table = load_task_table(p).with_context(|| format!("ingesting {}", p.display()))?;
        let table = if cfg.ingest.normalize && !table.is_normalized() {
            normalize_scores(&table).with_context(|| format!("normalizing {}", p.display()))?
        } else {
            table
        };
        let path = dir.join(format!("ingest-{i}-{}-{}.json", file_safe(table.task_id()), cfg.digest()));
        save_task_table(&table, &path)?;
        out.files.push(path);
    }
    Ok(out)
}
