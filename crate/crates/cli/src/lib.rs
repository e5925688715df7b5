//! `bifi`: generate synthetic data, train low-fidelity and residual
//! operators, predict trajectories and evaluate models.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use bifi_core::{OperatorVariant, StdKind, Target, TrunkKind};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "bifi", version, about = "Bi-fidelity operator learning for drag and lift trajectories")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Top-level seed; every random stream of the run derives from it.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Force coefficient the data and models describe.
    #[arg(long, global = true, value_enum)]
    pub target: Option<TargetArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic coarse.csv and fine.csv.
    Generate(GenerateArgs),
    /// Train the low-fidelity operator on coarse data.
    TrainLow(TrainLowArgs),
    /// Train the residual operator on fine data and write the combined model.
    TrainResidual(TrainResidualArgs),
    /// Predict one trajectory on a uniform time partition.
    Predict(PredictArgs),
    /// Relative L1/L2 errors of a model on a dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Drag,
    Lift,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Drag => Target::Drag,
            TargetArg::Lift => Target::Lift,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    #[value(alias = "physics_guided", alias = "physics-guided")]
    Physics,
    #[value(alias = "data_driven", alias = "data-driven")]
    Data,
}

impl From<VariantArg> for OperatorVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Physics => OperatorVariant::PhysicsGuided,
            VariantArg::Data => OperatorVariant::DataDriven,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrunkArg {
    Fourier,
    Vanilla,
}

impl From<TrunkArg> for TrunkKind {
    fn from(t: TrunkArg) -> Self {
        match t {
            TrunkArg::Fourier => TrunkKind::Fourier,
            TrunkArg::Vanilla => TrunkKind::Vanilla,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StdArg {
    Population,
    Sample,
}

impl From<StdArg> for StdKind {
    fn from(s: StdArg) -> Self {
        match s {
            StdArg::Population => StdKind::Population,
            StdArg::Sample => StdKind::Sample,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenerateArgs {
    /// Samples per trajectory.
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub n_coarse: Option<usize>,
    #[arg(long)]
    pub n_fine: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub t0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tf: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainingArgs {
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    pub trunk: Option<TrunkArg>,
    /// Maximum number of training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainLowArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Coarse dataset CSV.
    #[arg(long, value_name = "PATH")]
    pub coarse: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainResidualArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Fine dataset CSV.
    #[arg(long, value_name = "PATH")]
    pub fine: Option<PathBuf>,
    /// Low-fidelity operator file written by train-low.
    #[arg(long, value_name = "PATH")]
    pub low_model: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub u_bar: Option<f64>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub t0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tf: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    /// Bi-fidelity model or single-operator file.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Test dataset CSV; defaults to `<out>/fine_test.csv`.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub std: Option<StdArg>,
}

fn apply_training(section: &mut config::TrainingSection, args: &TrainingArgs) -> Result<()> {
    if let Some(v) = args.variant {
        section.variant = v.into();
    }
    if let Some(t) = args.trunk {
        section.trunk_kind = t.into();
    }
    if let Some(e) = args.epochs {
        if e == 0 {
            bail!("--epochs must be at least 1");
        }
        section.max_epochs = e;
    }
    Ok(())
}

impl Cli {
    /// The configuration file (or defaults) with this invocation's flags
    /// applied, resolved and validated.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut c = match &self.common.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.common.seed {
            c.seed = seed;
        }
        if let Some(out) = &self.common.out {
            c.out = out.clone();
        }
        if let Some(target) = self.common.target {
            c.target = target.into();
        }
        match &self.command {
            Command::Generate(a) => {
                if let Some(q) = a.q {
                    c.data.q = q;
                }
                if let Some(n) = a.n_coarse {
                    c.data.n_coarse = n;
                }
                if let Some(n) = a.n_fine {
                    c.data.n_fine = n;
                }
                if let Some(t0) = a.t0 {
                    c.data.t0 = t0;
                }
                if let Some(tf) = a.tf {
                    c.data.tf = tf;
                }
            }
            Command::TrainLow(a) => {
                apply_training(&mut c.low, &a.training)?;
                if let Some(p) = &a.coarse {
                    c.data.coarse = Some(p.clone());
                }
            }
            Command::TrainResidual(a) => {
                apply_training(&mut c.residual, &a.training)?;
                if let Some(p) = &a.fine {
                    c.data.fine = Some(p.clone());
                }
                if let Some(p) = &a.low_model {
                    c.low_model = Some(p.clone());
                }
            }
            Command::Predict(a) => {
                if let Some(p) = &a.model {
                    c.model = Some(p.clone());
                }
                if let Some(u) = a.u_bar {
                    c.predict.u_bar = u;
                }
                if let Some(q) = a.q {
                    c.predict.q = q;
                }
                if let Some(t0) = a.t0 {
                    c.predict.t0 = t0;
                }
                if let Some(tf) = a.tf {
                    c.predict.tf = tf;
                }
            }
            Command::Evaluate(a) => {
                if let Some(p) = &a.model {
                    c.model = Some(p.clone());
                }
                if let Some(s) = a.std {
                    c.evaluate.std = s.into();
                }
                if let Some(p) = &a.data {
                    c.evaluate.data = Some(p.clone());
                }
            }
        }
        c.validate()?;
        Ok(c.resolve())
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let config = cli.resolve_config()?;
    match &cli.command {
        Command::Generate(_) => commands::generate(&config).map(|_| ()),
        Command::TrainLow(_) => commands::train_low(&config).map(|_| ()),
        Command::TrainResidual(_) => commands::train_residual(&config).map(|_| ()),
        Command::Predict(_) => commands::predict(&config).map(|_| ()),
        Command::Evaluate(_) => commands::evaluate(&config).map(|_| ()),
    }
}
