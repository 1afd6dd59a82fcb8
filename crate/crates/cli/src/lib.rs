//! Command-line runner: config ingestion, seeded training and evaluation,
//! and the files each command leaves behind.

use std::fmt;
use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use uavmec::baselines::BaselineKind;
use uavmec::mopg::UpdateRule;
use uavmec::scheduler::SchedulerKind;
use uavmec::ExperimentConfig;

pub mod evaluate;
pub mod output;
pub mod pareto;
pub mod train;

pub use evaluate::{cmd_baseline, cmd_evaluate};
pub use pareto::cmd_pareto;
pub use train::cmd_train;

/// Environment variable naming the root for relative `output_dir`s.
pub const OUT_ROOT_ENV: &str = "UAVMEC_OUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "uavmec", version, about = "UAV edge-computing simulator and multi-objective trainer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the evolutionary training loop and write metrics, archive and checkpoints.
    Train(RunArgs),
    /// Roll out a checkpoint or a baseline on evaluation seeds.
    Evaluate(EvaluateArgs),
    /// Cluster a finished run's archive and report hypervolume and sparsity.
    Pareto(ParetoArgs),
    /// Evaluate the non-learning trajectory baselines.
    Baseline(BaselineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root for a relative `output_dir` when `--out` is not given.
    #[arg(long, env = OUT_ROOT_ENV)]
    pub out_root: Option<PathBuf>,
    /// Training threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long)]
    pub scheduler: Option<SchedulerKind>,
    #[arg(long = "update-rule")]
    pub update_rule: Option<UpdateRule>,
    /// No progress lines on stderr.
    #[arg(long)]
    pub quiet: bool,
}

impl RunArgs {
    pub fn new(config: impl Into<PathBuf>) -> Self {
        Self {
            config: config.into(),
            seed: None,
            out: None,
            out_root: None,
            workers: 0,
            scheduler: None,
            update_rule: None,
            quiet: true,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Policy checkpoint (`.emot`); a relative path is also looked up in the output directory.
    #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate a baseline instead of a checkpoint.
    #[arg(long)]
    pub baseline: Option<BaselineKind>,
    /// Episode seeds; defaults to the run's evaluation seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Subdirectory name under `eval/`; defaults to the baseline kind or checkpoint stem.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// One kind, or all of them when omitted.
    #[arg(long)]
    pub kind: Option<BaselineKind>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ParetoArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Cluster count; defaults to the run's `evo.kmeans_k`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

/// Bad or unreadable configuration; the binary exits with status 2.
#[derive(Debug)]
pub struct ConfigProblem(pub String);

impl fmt::Display for ConfigProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigProblem {}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|c| c.is::<ConfigProblem>()) {
        2
    } else {
        1
    }
}

/// Effective config after command-line overrides.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub config_sha256: String,
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let blank = ExperimentConfig { output_dir: PathBuf::new(), ..cfg.clone() };
    Ok(output::sha256_hex(blank.to_toml_string()?.as_bytes()))
}

pub fn load_config(args: &RunArgs) -> Result<Loaded> {
    let path = &args.config;
    let text = fs::read_to_string(path).map_err(|e| ConfigProblem(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg =
        ExperimentConfig::from_toml_str(&text).map_err(|e| ConfigProblem(format!("{}: {e}", path.display())))?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(k) = args.scheduler {
        cfg.scheduler_kind = k;
    }
    if let Some(r) = args.update_rule {
        cfg.update_rule = r;
    }
    let out = match (&args.out, &args.out_root) {
        (Some(o), _) => o.clone(),
        (None, Some(root)) if cfg.output_dir.is_relative() => root.join(&cfg.output_dir),
        _ => cfg.output_dir.clone(),
    };
    cfg.output_dir = out.clone();
    cfg.validate().map_err(|e| ConfigProblem(format!("{}: {e}", path.display())))?;
    let config_sha256 = config_hash(&cfg)?;
    Ok(Loaded { cfg, out, config_sha256 })
}

fn progress(quiet: bool, msg: impl FnOnce() -> String) {
    if !quiet {
        eprintln!("{}", msg());
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let r = cmd_train(&a)?;
            println!("{}", r.out.display());
        }
        Command::Evaluate(a) => {
            let dir = cmd_evaluate(&a)?;
            println!("{}", dir.display());
        }
        Command::Pareto(a) => {
            let dir = cmd_pareto(&a)?;
            println!("{}", dir.display());
        }
        Command::Baseline(a) => {
            let dir = cmd_baseline(&a)?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}
