mod manifest;
mod meta;
mod regions;
mod simulate;
mod spectrum_cmd;
mod study;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// One-vs-K-sample tests of a single case against a heterogeneous control group.
#[derive(Debug, Parser)]
#[command(name = "oktest", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test every region of a case against the controls listed in a manifest.
    Test(TestArgs),
    /// Run the synthetic settings and write raw p-values plus a summary.
    Simulate(SimulateArgs),
    /// Turn a directory of epoch time series into a band-power matrix CSV.
    Spectrum(SpectrumArgs),
    /// Build the case-plus-controls dendrogram for one region.
    Cluster(ClusterArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Root seed; falls back to the manifest, then OKTEST_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for report.json and dendrogram sidecars.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Comma-separated setting ids, e.g. 1.1,1.2
    #[arg(long, value_delimiter = ',', required = true)]
    pub settings: Vec<String>,
    /// Comma-separated methods out of FLR, CFLR, PAD, CPAD, PMAD, ADM.
    #[arg(long, value_delimiter = ',', required = true)]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    /// Epochs per subject.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Number of controls.
    #[arg(long, default_value_t = 54)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Lighter EM settings (p_max 3, 2 restarts) for single-machine runs.
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub n_perm: Option<usize>,
    #[arg(long)]
    pub p_max: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Directory of epoch files (*.csv, one row per series, or *.okep).
    #[arg(long)]
    pub epochs: PathBuf,
    /// Named band (delta, theta, alpha, beta, gamma) or NAME:LOW:HIGH in Hz.
    #[arg(long)]
    pub band: String,
    /// Sampling rate in Hz for CSV epochs.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Source-to-region map: one 1-based region index per line.
    #[arg(long)]
    pub regions: PathBuf,
    /// Number of regions; defaults to the largest index in the map.
    #[arg(long)]
    pub n_regions: Option<usize>,
    /// Average squared magnitudes instead of magnitudes.
    #[arg(long)]
    pub power: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// 1-based region (row) index.
    #[arg(long)]
    pub region: usize,
    /// Pairwise test behind the similarities: ad or flr.
    #[arg(long, default_value = "ad")]
    pub test: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

/// Failure split by exit code: 2 for bad input, 1 for everything else.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Test(a) => study::cmd_test(&a),
        Command::Simulate(a) => simulate::cmd_simulate(&a),
        Command::Spectrum(a) => spectrum_cmd::cmd_spectrum(&a),
        Command::Cluster(a) => study::cmd_cluster(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
