//! Command-line driver for the `aircomp` simulator.
//!
//! ```text
//! aircomp snr         closed-form normalized SNR of a cell
//! aircomp failprob    one Monte Carlo failure-probability estimate
//! aircomp sweep       a grid of estimates, as CSV
//! aircomp relay-bench relay-selection backends on random instances
//! aircomp train       signSGD with majority vote, per-round metrics as CSV
//! aircomp validate    oracle cross-checks
//! ```
//!
//! Exit status is 0 on success, 1 for usage and configuration errors and 2
//! for failures while running.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod manifest;
pub mod validate;

pub use commands::{SWEEP_COLUMNS, TRAIN_COLUMNS};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<aircomp::Error> for CliError {
    fn from(e: aircomp::Error) -> Self {
        match e {
            aircomp::Error::Config(_) | aircomp::Error::Domain(_) => CliError::Config(e.to_string()),
            aircomp::Error::Capacity { .. } | aircomp::Error::Divergence { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "aircomp", version, about = "Digital over-the-air majority-vote simulator")]
pub struct Cli {
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

/// Where the configuration comes from and where results go.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML experiment config.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in config: fig2-left, fig2-right, fig3 or fig4.
    #[arg(long)]
    pub preset: Option<String>,
    /// Master seed; overrides the config and the AIRCOMP_SEED variable.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; a `.manifest.json` is written next to it. Defaults to
    /// standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Single-value overrides applied on top of the config.
#[derive(Debug, Clone, Default, Args)]
#[allow(non_snake_case)]
pub struct Overrides {
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Cell radius over reference distance; sets `R_m = ratio · r0_m`.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long = "K")]
    pub K: Option<usize>,
    #[arg(long = "K-C")]
    pub K_C: Option<usize>,
    #[arg(long = "L")]
    pub L: Option<usize>,
    #[arg(long = "p-loc")]
    pub p_loc: Option<f64>,
    /// Symbol power; sets `P_dBW = P_s + 10·log10(M)`.
    #[arg(long = "P-s-dBW", allow_negative_numbers = true)]
    pub P_s_dBW: Option<f64>,
    #[arg(long = "N0-dBm", allow_negative_numbers = true)]
    pub N0_dBm: Option<f64>,
    #[arg(long)]
    pub trials: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form normalized detection SNR, optionally with a Monte Carlo
    /// estimate of the same quantity.
    Snr {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
        /// Channel draws for the Monte Carlo estimate; 0 skips it.
        #[arg(long, default_value_t = 0)]
        mc_draws: u64,
    },
    /// Failure probability of one scheme at one point.
    Failprob {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
        /// ideal, aircomp_pc (alias no-coop) or cluster-<solver>.
        #[arg(long, default_value = "aircomp_pc")]
        scheme: String,
    },
    /// Failure probability over the grid in `[sweep]`.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compares relay-selection backends on random cell instances.
    RelayBench {
        #[command(flatten)]
        common: Common,
        /// Clusters.
        #[arg(long = "C", default_value_t = 3)]
        clusters: usize,
        /// Relays per cluster.
        #[arg(long = "L", default_value_t = 1)]
        relays: usize,
        #[arg(long, default_value_t = 1000)]
        instances: u64,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Trains with every scheme in `[train].schemes` and reports per-round
    /// metrics.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        /// Replaces `[train].schemes`; repeatable.
        #[arg(long)]
        scheme: Vec<String>,
    },
    /// Runs the oracle cross-check suite.
    Validate {
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    let mut buf = Vec::new();
    let result = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))
            .and_then(|pool| pool.install(|| commands::dispatch(cli.command, &mut buf))),
        None => commands::dispatch(cli.command, &mut buf),
    };
    let _ = out.write_all(&buf);
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}
