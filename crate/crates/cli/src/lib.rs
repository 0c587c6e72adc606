//! Config-driven runs of the mpnas pipeline. Each subcommand reads a
//! [`RunConfig`], checks its inputs before running and writes its results
//! to the output directory under `<protocol>-<config digest>` names, so
//! identical configs produce identical files.

mod commands;
mod config;

use std::io::Write as _;
use std::time::Instant;

pub use commands::{
    cmd_eval, cmd_ingest, cmd_meta_train, cmd_search, cmd_synth, cmd_validate, load_collection, load_space,
    run_eval, run_search, run_synth, synthetic_base, synthetic_objective, Command, EvalOutcome, Outputs,
};
pub use config::{
    EvalProtocol, EvalSection, IngestSection, OracleSpec, Overrides, RunConfig, SearchMethod, SearchSection,
    SynthSection, DEFAULT_OUT, OUT_ENV,
};

/// Runs one subcommand and appends its wall time to `run.log` in the
/// output directory (the only file that differs between reruns).
pub fn run(command: Command, cfg: &RunConfig) -> anyhow::Result<Outputs> {
    let start = Instant::now();
    let result = match command {
        Command::MetaTrain => cmd_meta_train(cfg),
        Command::Eval => cmd_eval(cfg),
        Command::Synth => cmd_synth(cfg),
        Command::Search => cmd_search(cfg),
        Command::Ingest => cmd_ingest(cfg),
    };
    let status = if result.is_ok() { "ok" } else { "failed" };
    let dir = cfg.out_dir();
    if dir.is_dir() {
        let log = std::fs::OpenOptions::new().create(true).append(true).open(dir.join("run.log"));
        if let Ok(mut f) = log {
            let _ = writeln!(
                f,
                "{} {} seed={} {status} {:.3}s",
                command.name(),
                cfg.digest(),
                cfg.seed,
                start.elapsed().as_secs_f64()
            );
        }
    }
    result
}
