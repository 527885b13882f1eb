use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod analyze;
mod config;
mod error;
mod ingest;
mod returns;
mod simulate;

use error::CliError;

/// Simulate nonlinear SDEs with q-Gaussian densities and power-law spectra,
/// generate model returns, and analyze series.
#[derive(Debug, Parser)]
#[command(name = "qsde", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the two-power SDE with the variable-step scheme.
    Simulate(SimulateArgs),
    /// Generate one-minute returns from the double-stochastic model.
    Returns(ReturnsArgs),
    /// Spectrum, density, power-law fits and tail index of series.
    Analyze(AnalyzeArgs),
    /// Aggregate tick data into bars and optionally decompose them.
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key=value file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $QSDE_OUTPUT_DIR or ./qsde-out].
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SdeFlags {
    #[arg(long, allow_negative_numbers = true)]
    pub eta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sde: SdeFlags,
    /// Physical scale of the process.
    #[arg(long)]
    pub r0: Option<f64>,
    /// Physical noise intensity.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x_init: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Recorded steps [default: 1000000 unless --t-end is given].
    #[arg(long, conflicts_with = "t_end")]
    pub steps: Option<u64>,
    /// Stop once scaled time reaches this value.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Reflect the path at |x| = this bound.
    #[arg(long)]
    pub reflect_at: Option<f64>,
    /// Trajectory file format: bin, csv or both.
    #[arg(long)]
    pub format: Option<String>,
    /// Write r = r0 x and physical time instead of scaled units.
    #[arg(long)]
    pub physical: bool,
    /// Also write window averages over this length.
    #[arg(long)]
    pub window: Option<f64>,
    /// Observable for window averages: signed or abs.
    #[arg(long)]
    pub observable: Option<String>,
    /// Require lambda in (4 - eta, 1 + 2 eta), where the power-law spectrum holds.
    #[arg(long)]
    pub check_spectrum: bool,
}

#[derive(Debug, Args)]
pub struct ReturnsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Ignore model parameters from --config and start from the preset.
    #[arg(long)]
    pub paper_defaults: bool,
    #[arg(long)]
    pub minutes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent runs with seeds seed, seed + 1, ...
    #[arg(long)]
    pub realizations: Option<usize>,
    #[command(flatten)]
    pub sde: SdeFlags,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub r0_bar: Option<f64>,
    /// Minute length in scaled time.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub intercept: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub slope: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<u64>,
    /// Also write the background X.
    #[arg(long)]
    pub background: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trajectory (.bin or t,x[,h] CSV) or return (t,r[,N] CSV) file; repeat to average.
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// Window length for trajectories [default: span / 2^20].
    #[arg(long)]
    pub window: Option<f64>,
    /// Welch segment length [default: min(65536, n / 4) rounded down to a power of two].
    #[arg(long)]
    pub segment: Option<usize>,
    /// hann or rect.
    #[arg(long)]
    pub taper: Option<String>,
    #[arg(long)]
    pub f_lo: Option<f64>,
    #[arg(long)]
    pub f_hi: Option<f64>,
    #[arg(long)]
    pub pdf_bins: Option<usize>,
    /// Analyze x instead of |x|.
    #[arg(long)]
    pub signed: bool,
    /// each or none: divide every input by its standard deviation.
    #[arg(long)]
    pub normalize: Option<String>,
    /// Add closed-form density and spectrum columns.
    #[arg(long)]
    pub theory: bool,
    /// Also fit a two-exponent spectrum.
    #[arg(long)]
    pub broken: bool,
    /// Fraction of largest magnitudes used for the Hill estimate.
    #[arg(long)]
    pub tail_fraction: Option<f64>,
    #[command(flatten)]
    pub sde: SdeFlags,
    /// Scale of the theoretical density.
    #[arg(long)]
    pub r0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: Common,
    /// CSV with timestamp,price columns.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Bar length in seconds.
    #[arg(long)]
    pub bar: Option<f64>,
    #[arg(long)]
    pub ma_window: Option<usize>,
    /// Fit the fluctuation scale per moving-average bin.
    #[arg(long)]
    pub decompose: bool,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Equal-population bins of |MA|.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Bins with fewer points are flagged.
    #[arg(long)]
    pub min_count: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Returns(a) => returns::run(a),
        Command::Analyze(a) => analyze::run(a),
        Command::Ingest(a) => ingest::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                CliError::Validation(_) => "invalid input",
                CliError::Runtime(_) => "run failed",
                CliError::Io(_) => "i/o error",
            };
            eprintln!("qsde: {kind}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
