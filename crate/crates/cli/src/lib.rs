//! Command-line workflows over the `sparsity_roofline` model.
//!
//! Each subcommand is a plain function taking a resolved configuration and a sink
//! for its human-readable summary, so the binary stays a thin shell and tests can
//! drive the same code paths.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

pub mod args;
pub mod config;
pub mod matrices;
pub mod output;
pub mod sol;
pub mod validate;

pub use args::{Cli, Command};
pub use config::RunConfig;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    /// Writing outputs failed.
    Output,
    /// Arguments, run file, hardware profile or model spec are unusable.
    Config,
    /// Accuracy, measurement or matrix inputs are malformed.
    Data,
    /// Measurements contradict the speed-of-light bound.
    Physical,
}

impl Failure {
    pub fn exit_code(self) -> u8 {
        match self {
            Failure::Output => 1,
            Failure::Config => 2,
            Failure::Data => 3,
            Failure::Physical => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub failure: Failure,
    pub error: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

pub trait Classify<T> {
    fn fail(self, failure: Failure) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn fail(self, failure: Failure) -> CliResult<T> {
        self.map_err(|e| CliError {
            failure,
            error: e.into(),
        })
    }
}

pub(crate) fn failure(failure: Failure, error: anyhow::Error) -> CliError {
    CliError { failure, error }
}

/// Dispatches a parsed command line and returns the files it wrote.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<Vec<PathBuf>> {
    match &cli.command {
        Command::Sol(args) => {
            let run = RunConfig::from_args(args).fail(Failure::Config)?;
            sol::cmd_sol(&run, out)
        }
        Command::SparsityRoofline { run, accuracy } => {
            let run = RunConfig::from_args(run).fail(Failure::Config)?;
            sol::cmd_sparsity_roofline(&run, accuracy, out)
        }
        Command::Validate { run, measurements } => {
            let run = RunConfig::from_args_without_configs(run).fail(Failure::Config)?;
            validate::cmd_validate(&run, measurements, out)
        }
        Command::ProfileMatrices(args) => {
            let blocks = if args.blocks.is_empty() {
                matrices::DEFAULT_BLOCKS.to_vec()
            } else {
                args.blocks.clone()
            };
            matrices::cmd_profile_matrices(&args.dir, &blocks, &args.out, out)
        }
        Command::SweepLevels(args) => {
            cmd_sweep_levels(args.start, args.steps, &args.pattern, out)?;
            Ok(Vec::new())
        }
    }
}

/// Prints the halving schedule, or one config encoding per level and pattern.
pub fn cmd_sweep_levels(
    start: f64,
    steps: usize,
    patterns: &[sparsity_roofline::sparsecost::SparsityPattern],
    out: &mut dyn Write,
) -> CliResult<()> {
    use sparsity_roofline::report::fmt_sig6;
    use sparsity_roofline::sparsecost::{sparsity_sweep, SparsityConfig, SparsityPattern};

    let levels = sparsity_sweep(start, steps).fail(Failure::Config)?;
    let mut lines = Vec::new();
    if patterns.is_empty() {
        lines.extend(levels.iter().map(|&l| fmt_sig6(l)));
    }
    for &p in patterns {
        match p {
            SparsityPattern::Dense | SparsityPattern::NofM { .. } => {
                lines.push(SparsityConfig::from_parts(p, 0.0).fail(Failure::Config)?.to_string());
            }
            _ => {
                for &l in &levels {
                    lines.push(format!("{p}:{}", fmt_sig6(l)));
                }
            }
        }
    }
    for line in lines {
        writeln!(out, "{line}").fail(Failure::Output)?;
    }
    Ok(())
}
