use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sparsity_roofline::report::OutputFormat;
use sparsity_roofline::sparsecost::{SparsityConfig, SparsityPattern};

#[derive(Debug, Parser)]
#[command(name = "sparsity-roofline", version, about = "Speed-of-light speedups for sparse networks")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-layer SoL tables and per-model speedups over dense.
    Sol(RunArgs),
    /// Join speedups with measured accuracy into Sparsity Roofline series.
    SparsityRoofline {
        #[command(flatten)]
        run: RunArgs,
        /// CSV with columns model,pattern,level,top1.
        #[arg(long)]
        accuracy: PathBuf,
    },
    /// Compare measured latencies against their SoL bounds.
    Validate {
        #[command(flatten)]
        run: RunArgs,
        /// CSV with columns scope,pattern,level,latency_ms.
        #[arg(long)]
        measurements: PathBuf,
    },
    /// Block occupancy statistics for a directory of MatrixMarket files.
    ProfileMatrices(ProfileArgs),
    /// Print the halving sparsity schedule.
    SweepLevels(SweepArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Run description in TOML; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Hardware profile (TOML).
    #[arg(long)]
    pub hw: Option<PathBuf>,

    /// Model spec (JSON); repeatable.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,

    /// Sparsity config such as `unstructured:0.875`, `block:4x4:0.9`, `nm:2:4`; repeatable.
    #[arg(long)]
    pub sparsity: Vec<SparsityConfig>,

    /// Batch size; repeatable.
    #[arg(long = "batch")]
    pub batches: Vec<u64>,

    /// Bytes per stored weight value [default: 2]
    #[arg(long)]
    pub value_bytes: Option<u64>,
    /// Bytes per CSR/BSR column index [default: 4]
    #[arg(long)]
    pub index_bytes: Option<u64>,
    /// Bytes per row pointer [default: 4]
    #[arg(long)]
    pub pointer_bytes: Option<u64>,

    /// Engine override `pattern=engine`, e.g. `unstructured=matrix`; repeatable.
    #[arg(long = "engine-map", value_delimiter = ',')]
    pub engine_map: Vec<String>,

    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Output formats, comma separated: csv, json, svg.
    #[arg(long, value_delimiter = ',')]
    pub format: Vec<OutputFormat>,

    /// SVG width in pixels.
    #[arg(long)]
    pub width: Option<u32>,

    /// SVG height in pixels.
    #[arg(long)]
    pub height: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    /// Directory scanned for `*.mtx` files (not recursive).
    #[arg(long)]
    pub dir: PathBuf,

    /// Block size `HxW`; repeatable. Defaults to 2x2, 4x4, 8x8, 16x16 and 32x32.
    #[arg(long = "block", value_parser = parse_block)]
    pub blocks: Vec<(usize, usize)>,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 0.5)]
    pub start: f64,

    #[arg(long, default_value_t = 5)]
    pub steps: usize,

    /// Print one sparsity encoding per level for each pattern instead of bare levels.
    #[arg(long)]
    pub pattern: Vec<SparsityPattern>,
}

pub fn parse_block(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got `{s}`"))?;
    let dim = |t: &str| match t.trim().parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("block dimension must be a positive integer, got `{t}`")),
    };
    Ok((dim(h)?, dim(w)?))
}
