//! `spinbath`: command-line front end to the spin-bath coherence simulator.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl From<spinbath_core::Error> for CliError {
    fn from(e: spinbath_core::Error) -> Self {
        if e.is_input_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numerical(format!("i/o: {e}"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "spinbath", version, about = "Qubit coherence under spectrally engineered spin-bath driving")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "SPINBATH_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct DriveArgs {
    /// mono, lorentzian or gaussian.
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub omega_mhz: Option<f64>,
    #[arg(long)]
    pub dnu_mhz: Option<f64>,
    #[arg(long)]
    pub carrier_mhz: Option<f64>,
    /// `off` disables the drive.
    #[arg(long, value_parser = ["on", "off"])]
    pub drive: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct BathArgs {
    /// Calibrated bath file (default: <output-dir>/bath.json).
    #[arg(long)]
    pub bath: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct McArgs {
    #[arg(long)]
    pub mc_spins: Option<usize>,
    #[arg(long)]
    pub mc_realizations: Option<usize>,
    #[arg(long)]
    pub mc_step_ns: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize drive waveforms and estimate their spectrum.
    Waveform {
        #[command(flatten)]
        drive: DriveArgs,
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long)]
        step_ns: Option<f64>,
    },
    /// Fit bath couplings to reference T2 values.
    Calibrate {
        /// paper (reference ratios) or bare.
        #[arg(long)]
        targets: Option<String>,
        #[arg(long)]
        bare_t2_us: Option<f64>,
        #[arg(long)]
        residual_tau_us: Option<f64>,
    },
    /// T2 for one drive.
    T2 {
        #[command(flatten)]
        bath: BathArgs,
        #[command(flatten)]
        drive: DriveArgs,
    },
    /// T2 over an (Ω, Δν) grid.
    Sweep {
        #[command(flatten)]
        bath: BathArgs,
        #[arg(long)]
        shape: Option<String>,
        /// Ω list or grid (MHz): "4.9", "1,2,3", "log:lo:hi:n".
        #[arg(long, visible_alias = "omega-grid")]
        omega_mhz: Option<String>,
        /// Δν list or grid (MHz).
        #[arg(long, visible_alias = "dnu-grid")]
        dnu_mhz: Option<String>,
    },
    /// DEER spectrum, Rabi-damping family, or driven spectra.
    Deer {
        #[command(flatten)]
        bath: BathArgs,
        /// spectrum, rabi or spectra.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        omega_mhz: Option<f64>,
        /// Linewidths (MHz) for rabi/spectra modes.
        #[arg(long)]
        dnu_mhz: Option<String>,
        #[arg(long)]
        t_ss_ns: Option<f64>,
        #[arg(long)]
        t_ss_max_ns: Option<f64>,
        #[arg(long)]
        t_ss_step_ns: Option<f64>,
        #[arg(long)]
        tau_us: Option<f64>,
        #[arg(long)]
        fwhm_mhz: Option<f64>,
        #[arg(long)]
        f_start_mhz: Option<f64>,
        #[arg(long)]
        f_stop_mhz: Option<f64>,
        #[arg(long)]
        f_step_mhz: Option<f64>,
        /// gaussian (closed form) or mc.
        #[arg(long)]
        kappa: Option<String>,
        #[arg(long)]
        tau_filter_us: Option<f64>,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Best drive linewidth at fixed Ω.
    Optimize {
        #[command(flatten)]
        bath: BathArgs,
        #[arg(long)]
        omega_mhz: Option<f64>,
        #[arg(long)]
        shape: Option<String>,
    },
    /// Ω needed for a T2 gain, monochromatic vs stochastic.
    Power {
        #[command(flatten)]
        bath: BathArgs,
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        shape: Option<String>,
    },
    /// Lorentzian vs Gaussian drive at optimal linewidths.
    Shapes {
        #[command(flatten)]
        bath: BathArgs,
        #[arg(long, visible_alias = "omega-grid")]
        omega_mhz: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(1)
        }
    }
}
