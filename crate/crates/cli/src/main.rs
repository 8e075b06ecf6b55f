use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use blin_core::engine::ArmPolicy;
use blin_core::sequences::LogBase;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;

use config::{usage, Algorithm, EnvSpec, ExperimentConfig, UsageError};

#[derive(Parser)]
#[command(name = "blin", version, about = "Batched Lipschitz bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm once and write trace.csv, regret.csv, summary.json.
    Run(ExperimentArgs),
    /// Run several algorithms and seeds and write per-run and merged regret curves.
    Compare(ExperimentArgs),
    /// Tabulate zooming numbers and estimate the zooming dimension.
    ZoomingOracle(OracleArgs),
    /// Evaluate every upper and lower bound at one parameter point.
    Bounds(BoundsArgs),
    /// Materialise a lower-bound instance as a JSON descriptor.
    LowerBoundEnv(LowerBoundArgs),
}

#[derive(Args, Debug, Default)]
struct ExperimentArgs {
    /// two-peak, linear, constant, or a path to an instance JSON file
    #[arg(long)]
    env: Option<String>,
    /// Algorithm(s), comma separated for compare
    #[arg(long, value_enum, value_delimiter = ',')]
    alg: Vec<Algorithm>,
    #[arg(long = "T")]
    horizon: Option<u64>,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    dz: Option<f64>,
    /// Seed(s), comma separated for compare
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write partition_batch_m.svg for every batch
    #[arg(long)]
    snapshots: bool,
    /// Noise standard deviation (0 for a noiseless run)
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long = "arm-policy", value_enum)]
    arm_policy: Option<PolicyArg>,
    /// JSON experiment config; flags given alongside override it
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    CubeCenter,
    UniformInCube,
}

impl From<PolicyArg> for ArmPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::CubeCenter => ArmPolicy::CubeCenter,
            PolicyArg::UniformInCube => ArmPolicy::UniformInCube,
        }
    }
}

impl ExperimentArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let Some(env) = self.env.clone() else {
                    return usage("--env is required (or pass --config)");
                };
                let Some(horizon) = self.horizon else {
                    return usage("--T is required (or pass --config)");
                };
                ExperimentConfig {
                    env: EnvSpec::Name(env),
                    algorithms: Vec::new(),
                    horizon,
                    d: None,
                    dz: 0.0,
                    seeds: vec![0],
                    out: PathBuf::from("out"),
                    snapshots: false,
                    noise_scale: 1.0,
                    arm_policy: ArmPolicy::CubeCenter,
                }
            }
        };
        if let Some(env) = self.env {
            cfg.env = EnvSpec::Name(env);
        }
        if !self.alg.is_empty() {
            cfg.algorithms = self.alg;
        }
        if let Some(t) = self.horizon {
            cfg.horizon = t;
        }
        if self.d.is_some() {
            cfg.d = self.d;
        }
        if let Some(dz) = self.dz {
            cfg.dz = dz;
        }
        if !self.seed.is_empty() {
            cfg.seeds = self.seed;
        }
        if let Some(out) = self.out {
            cfg.out = out;
        }
        cfg.snapshots |= self.snapshots;
        if let Some(n) = self.noise {
            cfg.noise_scale = n;
        }
        if let Some(p) = self.arm_policy {
            cfg.arm_policy = p.into();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    d: Option<u32>,
    /// Finest scale, a power of two such as 0.0078125
    #[arg(long = "r-min", default_value_t = 0.0078125)]
    r_min: f64,
    /// Directory for zooming.json; the report always goes to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaseArg {
    Two,
    Natural,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    d: u32,
    #[arg(long)]
    dz: f64,
    #[arg(long, default_value_t = 1.0)]
    cz: f64,
    #[arg(long = "T")]
    horizon: f64,
    #[arg(long = "B")]
    batches: u32,
    /// `C` of the minimum-rounds formula
    #[arg(long = "C", default_value_t = std::f64::consts::E)]
    optimality_factor: f64,
    #[arg(long = "log-base", value_enum, default_value = "two")]
    log_base: BaseArg,
    /// Directory for bounds.json; the report always goes to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Family {
    Static,
    Adaptive,
}

#[derive(Args, Debug)]
struct LowerBoundArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long)]
    d: u32,
    #[arg(long = "T")]
    horizon: u64,
    #[arg(long = "B")]
    batches: u32,
    /// Grid index k (static) or world j (adaptive), 1-based
    #[arg(long)]
    k: u32,
    /// Instance index within the family, 1-based
    #[arg(long, default_value_t = 1)]
    instance: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for instance.json; the descriptor always goes to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => commands::run(&args.into_config()?),
        Command::Compare(args) => commands::compare(&args.into_config()?),
        Command::ZoomingOracle(a) => {
            commands::zooming_oracle(&a.env, a.d, a.r_min, a.out.as_deref())
        }
        Command::Bounds(a) => {
            let base = match a.log_base {
                BaseArg::Two => LogBase::Two,
                BaseArg::Natural => LogBase::Natural,
            };
            commands::bounds(
                a.d,
                a.dz,
                a.cz,
                a.horizon,
                a.batches,
                base,
                a.optimality_factor,
                a.out.as_deref(),
            )
        }
        Command::LowerBoundEnv(a) => commands::lower_bound_env(
            a.family,
            a.d,
            a.horizon,
            a.batches,
            a.k,
            a.instance,
            a.seed,
            a.out.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
