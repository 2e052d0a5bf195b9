//! The `dysaug` command line: config loading, augmentation planning,
//! manifest bookkeeping and one subcommand per pipeline stage.

mod commands;
mod config;
mod plan;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::RunMeta;
pub use config::{load_config, parse_config, CombineMode, CombineSection, EvalSection, LoadedConfig, Paths, RunConfig};
pub use plan::{
    augmented_record, job_seed, manifest_merge, plan_expansion, replica_factor, AugPlan, Directive, Job,
    SubsetSelector, SD_JITTER, SI_FACTORS,
};

use crate::align::AlignError;
use crate::autograd::AutogradError;
use crate::eval::EvalError;
use crate::experiment::ExperimentError;
use crate::gan::GanError;
use crate::signal::SignalError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical check failed: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<AlignError> for CliError {
    fn from(e: AlignError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        match e {
            SignalError::InvalidParams(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GanError> for CliError {
    fn from(e: GanError) -> Self {
        match e {
            GanError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NonFinite(_) => CliError::Numerical(e.to_string()),
            EvalError::WeightSum(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AutogradError> for CliError {
    fn from(e: AutogradError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Align(e) => e.into(),
            ExperimentError::Eval(e) => e.into(),
            ExperimentError::Gan(e) => e.into(),
            ExperimentError::Signal(e) => e.into(),
            ExperimentError::Setup(m) => CliError::Data(m),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "dysaug", version, about = "Data augmentation for dysarthric speech recognition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `paths.out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus.
    Synth,
    /// Compute speaker-dependent speed factors and run the plan's speed-only directives.
    Perturb,
    /// List parallel control/dysarthric training pairs.
    Pair,
    /// Train one convolutional GAN per target speaker.
    TrainDcgan,
    /// Train one spectral-basis GAN per target speaker.
    TrainSbgan,
    /// Run the augmentation plan and write the merged manifest.
    Augment,
    /// Train the recogniser and decode the held-out block.
    Eval,
    /// Combine N-best lists from several systems.
    Combine,
    /// Finite-difference check of every differentiable op.
    Gradcheck,
    /// Per-severity WER table from result files.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Perturb => "perturb",
            Command::Pair => "pair",
            Command::TrainDcgan => "train-dcgan",
            Command::TrainSbgan => "train-sbgan",
            Command::Augment => "augment",
            Command::Eval => "eval",
            Command::Combine => "combine",
            Command::Gradcheck => "gradcheck",
            Command::Report => "report",
        }
    }
}

/// Runs a parsed command line and returns the run record.
pub fn execute(cli: &Cli) -> Result<RunMeta> {
    let mut loaded = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        loaded.config.seed = seed;
    }
    let out = match (&cli.out, &loaded.config.paths.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => loaded.resolve(o),
        (None, None) => return Err(CliError::Config("no output directory: pass --out or set paths.out".into())),
    };
    commands::run(cli.command, &loaded, &out, cli.force)
}

/// Entry point of the binary: parses `args`, runs, reports errors on stderr
/// and maps them to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(meta) => {
            println!("{}: done ({})", meta.command, meta.summary());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dysaug {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
