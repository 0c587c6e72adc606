use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mpnas_core::evaluation::{SourceMode, StudyConfig, StudyKind, SupervisedConfig, DEFAULT_ABLATION_COUNTS};
use mpnas_core::meta_learner::MetaConfig;
use mpnas_core::nas_search::SearchConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything a subcommand needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    /// Search space file; the 4-slot mixed-ops space when absent.
    pub space: Option<PathBuf>,
    /// Task tables forming the meta-training / evaluation collection.
    pub tasks: Vec<PathBuf>,
    pub meta: MetaConfig,
    pub eval: EvalSection,
    pub synth: SynthSection,
    pub search: SearchSection,
    pub ingest: IngestSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalProtocol {
    Loo,
    Ablation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub protocol: EvalProtocol,
    pub mode: SourceMode,
    /// Target task id; the first table of `tasks` when absent.
    pub target: Option<String>,
    pub runs: usize,
    pub n_finetune: usize,
    /// Fine-tuning counts of the ablation protocol.
    pub counts: Vec<usize>,
    pub supervised: SupervisedConfig,
    /// Initialization to transfer instead of meta-training one.
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            protocol: EvalProtocol::Loo,
            mode: SourceMode::Meta,
            target: None,
            runs: 10,
            n_finetune: 5,
            counts: DEFAULT_ABLATION_COUNTS.to_vec(),
            supervised: SupervisedConfig::default(),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// Base table; otherwise `base_records` cells scored by a random
    /// synthetic objective over the configured space.
    pub base_table: Option<PathBuf>,
    pub base_records: usize,
    pub interaction: f64,
    pub kind: StudyKind,
    pub grid: Vec<f64>,
    pub n_tasks: usize,
    pub sigma: f64,
    pub n_correlated: usize,
    pub meta_records: usize,
    pub n_finetune: usize,
    pub runs: usize,
    pub baseline: bool,
    pub supervised: SupervisedConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = StudyConfig::default();
        SynthSection {
            base_table: None,
            base_records: 500,
            interaction: 0.5,
            kind: s.kind,
            grid: s.grid,
            n_tasks: s.n_tasks,
            sigma: s.sigma,
            n_correlated: s.n_correlated,
            meta_records: s.meta_records,
            n_finetune: s.n_finetune,
            runs: s.runs,
            baseline: s.baseline,
            supervised: s.supervised,
        }
    }
}

impl SynthSection {
    pub fn study(&self, meta: &MetaConfig) -> StudyConfig {
        StudyConfig {
            kind: self.kind,
            grid: self.grid.clone(),
            n_tasks: self.n_tasks,
            sigma: self.sigma,
            n_correlated: self.n_correlated,
            meta_records: self.meta_records,
            n_finetune: self.n_finetune,
            runs: self.runs,
            baseline: self.baseline,
            meta: meta.clone(),
            supervised: self.supervised.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMethod {
    Predictor,
    Random,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OracleSpec {
    /// Random synthetic objective over the search space, drawn from the
    /// master seed.
    Synthetic {
        #[serde(default = "half")]
        interaction: f64,
    },
    /// Lookup in a task table; the search runs over the table's space.
    Table { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub method: SearchMethod,
    pub oracle: OracleSpec,
    /// Initial predictor; otherwise meta-trained on `tasks`, or freshly
    /// initialized when there are none.
    pub checkpoint: Option<PathBuf>,
    pub config: SearchConfig,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            method: SearchMethod::Predictor,
            oracle: OracleSpec::Synthetic { interaction: 0.5 },
            checkpoint: None,
            config: SearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// Tables to re-emit; `tasks` when empty.
    pub inputs: Vec<PathBuf>,
    /// z-score raw tables.
    pub normalize: bool,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            inputs: Vec::new(),
            normalize: true,
        }
    }
}

/// Command-line values that take precedence over config keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// Output directory used when neither `--out` nor the config names one.
pub const OUT_ENV: &str = "MPNAS_OUT";
pub const DEFAULT_OUT: &str = "mpnas-out";

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).with_context(|| format!("{origin}: invalid config"))
    }

    /// Parses `path` and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = RunConfig::from_json(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix_opt(&mut self.out);
        fix_opt(&mut self.space);
        self.tasks.iter_mut().for_each(fix);
        fix_opt(&mut self.eval.checkpoint);
        fix_opt(&mut self.synth.base_table);
        fix_opt(&mut self.search.checkpoint);
        if let OracleSpec::Table { path } = &mut self.search.oracle {
            fix(path);
        }
        self.ingest.inputs.iter_mut().for_each(fix);
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(jobs) = o.jobs {
            self.jobs = Some(jobs);
        }
    }

    /// `--out`, then the config, then `$MPNAS_OUT`, then `./mpnas-out`.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    /// Everything that determines results: the config without `out` and
    /// `jobs`.
    pub fn result_config(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.out = None;
        c.jobs = None;
        serde_json::to_value(c).expect("config serializes")
    }

    /// First 12 hex digits of the sha256 of [`RunConfig::result_config`].
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(&self.result_config()).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .take(6)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
