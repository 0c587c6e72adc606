use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpnas_cli::{cmd_validate, run, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "mpnas", version, about = "Meta-learned performance predictors for architecture search")]
struct Cli {
    /// JSON run config; all defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory (overrides `out`; falls back to $MPNAS_OUT).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Check the config and every referenced file without running anything.
    Validate {
        /// Only check what this subcommand needs.
        #[arg(value_name = "SUBCOMMAND")]
        only: Option<String>,
    },
    /// Meta-train a predictor initialization on the configured tasks.
    MetaTrain,
    /// Leave-one-out transfer or fine-tune-count ablation.
    Eval,
    /// Synthetic transferability study (A, B or C).
    Synth,
    /// Predictor-guided or random architecture search.
    Search,
    /// Schema-check, normalize and re-emit task tables.
    Ingest,
}

fn parse_command(name: &str) -> Option<Command> {
    Command::ALL.into_iter().find(|c| c.name() == name)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::FAILURE;
            }
        },
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        jobs: cli.jobs,
    });
    if let Some(n) = cfg.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be >= 1");
            return ExitCode::FAILURE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let command = match cli.command {
        Sub::Validate { only } => {
            let scope = match only.as_deref() {
                None => Command::ALL.to_vec(),
                Some(name) => match parse_command(name) {
                    Some(c) => vec![c],
                    None => {
                        eprintln!("error: unknown subcommand `{name}`");
                        return ExitCode::FAILURE;
                    }
                },
            };
            let problems = cmd_validate(&cfg, &scope);
            if problems.is_empty() {
                println!("ok");
                return ExitCode::SUCCESS;
            }
            for p in &problems {
                eprintln!("error: {p}");
            }
            return ExitCode::FAILURE;
        }
        Sub::MetaTrain => Command::MetaTrain,
        Sub::Eval => Command::Eval,
        Sub::Synth => Command::Synth,
        Sub::Search => Command::Search,
        Sub::Ingest => Command::Ingest,
    };
    match run(command, &cfg) {
        Ok(out) => {
            for f in &out.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
