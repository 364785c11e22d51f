//! `zpos`: similarity matrices, position estimation, rendering and
//! synthetic benchmarks from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numeric failure of the estimator.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "zpos", version, about = "Estimate z-positions of serial sections from image similarity")]
pub struct Cli {
    /// Print a JSON summary on standard output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Per-phase timings and per-iteration objective on standard error.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    /// Worker threads; affects wall time only. Defaults to all cores.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a banded similarity matrix from an image stack.
    Psm(PsmArgs),
    /// Estimate section positions from a similarity matrix.
    Estimate(EstimateArgs),
    /// Resample a stack at estimated positions and draw diagnostics.
    Render(RenderArgs),
    /// Generate or perturb synthetic instances with ground truth.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Compare estimated positions against a reference.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct PsmArgs {
    /// Stack header (JSON).
    #[arg(long)]
    pub stack: PathBuf,
    /// Largest index distance compared.
    #[arg(long)]
    pub range: usize,
    /// Block grid `BX,BY`; `--out` is then a directory.
    #[arg(long, value_parser = parse_blocks)]
    pub blocks: Option<(usize, usize)>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CurveArg {
    Global,
    Local,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Similarity matrix CSV.
    #[arg(long)]
    pub psm: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    /// Fraction of each shift applied per iteration.
    #[arg(long, default_value_t = 0.1)]
    pub damping: f64,
    #[arg(long, value_enum, default_value = "global")]
    pub curve: CurveArg,
    /// Curve-fit window width; default a quarter of the section count.
    #[arg(long)]
    pub wf_sigma: Option<f64>,
    /// Vote window width; default the comparison range.
    #[arg(long)]
    pub ws_sigma: Option<f64>,
    #[arg(long, default_value_t = 4.0)]
    pub m_max: f64,
    /// Pull of the quality multipliers toward 1.
    #[arg(long, default_value_t = 0.1)]
    pub lambda_m: f64,
    /// Let sections pass their neighbours (default).
    #[arg(long, overrides_with = "no_allow_reorder")]
    pub allow_reorder: bool,
    /// Keep sections in input order.
    #[arg(long, overrides_with = "allow_reorder")]
    pub no_allow_reorder: bool,
    /// Recorded in the report only.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Positions CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Run report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Final decay curves CSV.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Floor,
    Linear,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub stack: PathBuf,
    #[arg(long)]
    pub positions: PathBuf,
    #[arg(long, value_enum, default_value = "floor")]
    pub method: MethodArg,
    /// Output section count; default follows the smallest spacing.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Row of the xz slice.
    #[arg(long, requires = "out_image")]
    pub xz: Option<usize>,
    #[arg(long, requires = "xz")]
    pub out_image: Option<PathBuf>,
    #[arg(long, requires = "psm_image")]
    pub psm: Option<PathBuf>,
    #[arg(long, requires = "psm")]
    pub psm_image: Option<PathBuf>,
    /// Side length of the similarity image.
    #[arg(long, default_value_t = 512)]
    pub psm_size: usize,
    /// Resampled stack header.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Similarity matrix from a jittered decay model.
    Psm(SimPsmArgs),
    /// Smooth random volume, optionally sampled into sections.
    Volume(SimVolumeArgs),
    /// Drop sections from an instance.
    Remove(SimRemoveArgs),
    /// Shuffle sections within a bounded displacement.
    Reorder(SimReorderArgs),
}

#[derive(Debug, Args)]
pub struct SimPsmArgs {
    #[arg(long)]
    pub n: usize,
    /// `exp:<tau>` or `gauss:<sigma>`.
    #[arg(long, default_value = "exp:3")]
    pub decay: String,
    /// Uniform displacement bound around the grid, below 0.5.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Standard deviation of additive similarity noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 10)]
    pub range: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimVolumeArgs {
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub depth: usize,
    #[arg(long, default_value_t = 2.0)]
    pub smooth_sigma: f64,
    /// Also sample this many sections into `stack.json`.
    #[arg(long)]
    pub sections: Option<usize>,
    #[arg(long, default_value_t = 0.0, requires = "sections")]
    pub jitter: f64,
    /// Voxels per grid unit.
    #[arg(long, default_value_t = 1.0, requires = "sections")]
    pub spacing: f64,
    /// Volume z of grid position 0.
    #[arg(long, default_value_t = 0.0, requires = "sections")]
    pub offset: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("instance").required(true).multiple(true).args(["psm", "stack"]))]
pub struct SimRemoveArgs {
    #[arg(long)]
    pub psm: Option<PathBuf>,
    #[arg(long)]
    pub stack: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Current section indices to drop, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub indices: Vec<usize>,
    /// Accepted for a uniform interface; removal is not random.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("instance").required(true).multiple(true).args(["psm", "stack"]))]
pub struct SimReorderArgs {
    #[arg(long)]
    pub psm: Option<PathBuf>,
    #[arg(long)]
    pub stack: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub max_displacement: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignArg {
    None,
    Affine,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Positions CSV (`z` column).
    #[arg(long)]
    pub estimated: PathBuf,
    /// Positions or ground truth CSV (`z` or `true_z` column).
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    pub align: AlignArg,
    /// `new_index,original_index` map into the reference rows.
    #[arg(long)]
    pub kept: Option<PathBuf>,
}

fn parse_blocks(s: &str) -> Result<(usize, usize), String> {
    let err = || format!("expected BX,BY with positive counts, got {s:?}");
    let (x, y) = s.split_once(',').ok_or_else(err)?;
    let x: usize = x.trim().parse().map_err(|_| err())?;
    let y: usize = y.trim().parse().map_err(|_| err())?;
    if x == 0 || y == 0 {
        return Err(err());
    }
    Ok((x, y))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<zpos_core::Error>() {
        Some(e) if e.is_numeric() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
