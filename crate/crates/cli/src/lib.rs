//! `hsu` command-line front end.

pub mod config;
pub mod cubefile;
pub mod io;

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

pub use commands::{DecomposeReport, EvaluationOutput};

#[derive(Debug, Parser)]
#[command(name = "hsu", version, about = "Hyperspectral unmixing by constrained CP decomposition")]
pub struct Cli {
    /// Worker threads for data-parallel kernels and multi-start runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run everything on one thread (bitwise reproducible).
    #[arg(long, global = true)]
    pub single_thread: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic time-series scene.
    Synth(SynthArgs),
    /// Build a patch or morphological-profile tensor from a cube.
    Build(BuildArgs),
    /// Run AO-ADMM on a tensor.
    Decompose(DecomposeArgs),
    /// Score factors against ground truth or a spectral library.
    Evaluate(EvaluateArgs),
    /// Time the per-iteration cost over growing problem sizes.
    Bench(BenchArgs),
    /// Convert a band-interleaved raw image into a cube file.
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON scene description; defaults to the bundled scene.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `zero` or `object:N`.
    #[arg(long)]
    pub background: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_parser = ["patch", "mm"])]
    pub mode: String,
    /// Patch edge length (odd).
    #[arg(long)]
    pub patch: Option<usize>,
    /// Comma-separated disk radii, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also run the other ASC mode with the same seeds.
    #[arg(long)]
    pub compare_asc: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory holding A.csv, B.csv, Psi.csv.
    #[arg(long)]
    pub factors: PathBuf,
    /// Ground-truth directory with the same layout.
    #[arg(long, conflicts_with = "reference")]
    pub truth: Option<PathBuf>,
    /// Spectral library CSV (one column per material).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Data tensor, to recompute the reconstruction error.
    #[arg(long)]
    pub tensor: Option<PathBuf>,
    /// Spatial grid for abundance maps when the factors carry none.
    #[arg(long, requires = "cols")]
    pub rows: Option<usize>,
    #[arg(long, requires = "rows")]
    pub cols: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_parser = ["pixels", "rank", "slices"], default_value = "pixels")]
    pub scale_axis: String,
    #[arg(long, default_value_t = 4)]
    pub points: usize,
    #[arg(long, default_value_t = 2000)]
    pub pixels: usize,
    #[arg(long, default_value_t = 26)]
    pub bands: usize,
    #[arg(long, default_value_t = 9)]
    pub slices: usize,
    #[arg(long, default_value_t = 3)]
    pub rank: usize,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// JSON description of the raw file.
    #[arg(long)]
    pub header: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = if cli.single_thread { Some(1) } else { cli.threads };
    match threads {
        Some(n) => {
            anyhow::ensure!(n >= 1, "--threads must be >= 1");
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            pool.install(|| commands::dispatch(&cli))
        }
        None => commands::dispatch(&cli),
    }
}

/// 2 for numerical failures (non-finite values), 0 for help/version, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if let Some(e) = err.downcast_ref::<clap::Error>() {
        return if e.use_stderr() { 1 } else { 0 };
    }
    let numerical = err
        .chain()
        .any(|cause| matches!(cause.downcast_ref::<hsu_core::Error>(), Some(hsu_core::Error::NonFinite(_))));
    if numerical {
        2
    } else {
        1
    }
}
