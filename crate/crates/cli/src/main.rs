//! `drachma` command-line front end.
//!
//! Every command reads a JSON config, writes its results under `--out-dir`
//! and finishes with a `manifest.json` describing the run.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drachma::error::ErrorKind;
use drachma::synthesis::FactorOrder;

#[derive(Debug, Parser)]
#[command(name = "drachma", version, about = "Reset readout pulse synthesis, simulation and calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a readout pulse and write it as CSV.
    Synth(SynthArgs),
    /// Simulate the cavity branches under a pulse.
    Simulate(SimulateArgs),
    /// Single-shot Monte Carlo with matched-filter integration.
    Shots(ShotsArgs),
    /// Readout signal and error against pulse duration.
    Sweep(SweepArgs),
    /// Grid scan of the Kerr constants used for synthesis.
    ScanZeta(ScanZetaArgs),
    /// Detection-chain or AC-Stark calibration.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for all outputs; created if missing.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct PulseOverrides {
    /// Override the pulse duration (ns).
    #[arg(long)]
    pub tp_ns: Option<f64>,
    /// Rescale the amplitude to this linear peak photon number.
    #[arg(long)]
    pub peak_photons: Option<f64>,
    /// Maximum sample spacing of the pulse (ns).
    #[arg(long, default_value_t = 1.0)]
    pub dt_ns: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderArg {
    Ascending,
    Descending,
    Symmetric,
}

impl From<OrderArg> for FactorOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Ascending => FactorOrder::Ascending,
            OrderArg::Descending => FactorOrder::Descending,
            OrderArg::Symmetric => FactorOrder::Symmetric,
        }
    }
}

#[derive(Debug, Args)]
pub struct KerrArgs {
    /// Fixed-point iterations of the Kerr correction.
    #[arg(long, default_value_t = 1)]
    pub iterations: usize,
    /// Order in which the Kerr-shifted factors are applied.
    #[arg(long, value_enum, default_value_t = OrderArg::Symmetric)]
    pub order: OrderArg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub pulse: PulseOverrides,
    /// Correct for the Kerr constants in the config.
    #[arg(long)]
    pub kerr: bool,
    #[command(flatten)]
    pub kerr_opts: KerrArgs,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["pulse_file", "auto", "conventional"])))]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Pulse CSV (`t_ns,re,im`) to simulate.
    #[arg(long = "pulse", value_name = "CSV")]
    pub pulse_file: Option<PathBuf>,
    /// Synthesize the pulse from the config, Kerr-corrected when the
    /// branches carry Kerr constants.
    #[arg(long)]
    pub auto: bool,
    /// Drive with the plain `A sin^m` envelope instead of a reset pulse.
    #[arg(long)]
    pub conventional: bool,
    /// Envelope exponent for --conventional.
    #[arg(long, default_value_t = 4)]
    pub exponent: u32,
    /// Ring-down window after the pulse, in units of 1/κ.
    #[arg(long, default_value_t = drachma::dynamics::DEFAULT_TAIL_KAPPA)]
    pub tail_kappa: f64,
    #[command(flatten)]
    pub pulse: PulseOverrides,
    #[command(flatten)]
    pub kerr_opts: KerrArgs,
}

#[derive(Debug, Args)]
pub struct ShotsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Shots per prepared state.
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lifetime of the second branch (µs); replaces the config value.
    #[arg(long, conflicts_with = "no_t1")]
    pub t1_us: Option<f64>,
    /// Disable relaxation.
    #[arg(long)]
    pub no_t1: bool,
    /// Disable measurement noise.
    #[arg(long)]
    pub no_noise: bool,
    #[command(flatten)]
    pub pulse: PulseOverrides,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated pulse durations (ns).
    #[arg(long, value_delimiter = ',', required = true)]
    pub tp_list: Vec<f64>,
    /// `max_signal` or `error`.
    #[arg(long, default_value = "max_signal")]
    pub mode: String,
    /// Linear peak photon number held fixed across durations.
    #[arg(long, default_value_t = 200.0)]
    pub peak_photons: f64,
    /// Shots per state and duration in error mode.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum sample spacing of the pulse (ns).
    #[arg(long, default_value_t = 1.0)]
    pub dt_ns: f64,
}

#[derive(Debug, Args)]
pub struct ScanZetaArgs {
    #[command(flatten)]
    pub common: Common,
    /// One `start:stop:step` range in Hz per branch, comma-separated.
    #[arg(long)]
    pub grid: String,
    #[command(flatten)]
    pub pulse: PulseOverrides,
    #[command(flatten)]
    pub kerr_opts: KerrArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CalibrationMode {
    Chain,
    Acstark,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub mode: CalibrationMode,
    /// Measured drive `a_in` as CSV (chain mode).
    #[arg(long, requires = "output")]
    pub input: Option<PathBuf>,
    /// Measured output `a_out` as CSV (chain mode).
    #[arg(long, requires = "input")]
    pub output: Option<PathBuf>,
    /// Noise added to synthetic chain data (dB); noiseless when absent.
    #[arg(long)]
    pub snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Branch whose response links drive and output (chain mode).
    #[arg(long)]
    pub branch: Option<usize>,
    /// Comma-separated drive amplitudes in √(photons/s) (acstark mode).
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1000.0, 2000.0, 3000.0, 4000.0, 5000.0])]
    pub amplitudes: Vec<f64>,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Validation => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Io => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Shots(a) => commands::shots(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::ScanZeta(a) => commands::scan_zeta(a),
        Command::Calibrate(a) => commands::calibrate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
