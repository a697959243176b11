//! `lrtest`: randomization-based logrank testing from the command line.
//!
//! Four subcommands share one report envelope: `test` runs the
//! (stratified) logrank test on a CSV dataset, `simulate` replicates a
//! scenario and summarizes the statistic's distribution, `oracle`
//! enumerates a small population exactly and verifies the distributional
//! laws the test relies on, and `moments` evaluates the exact and
//! approximate score variance with regularity diagnostics.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 statistic undefined,
//! 4 verification failure.

mod commands;
mod dataset;
mod popspec;
mod report;
mod scenario;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// A command failure routed to the documented exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, malformed input files, impossible configurations.
    Usage(String),
    /// The requested statistic does not exist for this input.
    Undefined(String),
    /// An exact check ran and found a deviation above tolerance.
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Undefined(_) => 3,
            Failure::Verification(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) | Failure::Undefined(msg) | Failure::Verification(msg) => {
                f.write_str(msg)
            }
        }
    }
}

impl From<lrtest_core::Error> for Failure {
    fn from(err: lrtest_core::Error) -> Self {
        Failure::Usage(err.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;

#[derive(Parser)]
#[command(
    name = "lrtest",
    version,
    about = "Randomization-based logrank and stratified logrank tests",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the logrank test on a CSV dataset
    Test(TestArgs),
    /// Replicate a simulation scenario and summarize the statistic
    Simulate(SimulateArgs),
    /// Enumerate a small population exactly and verify its laws
    Oracle(OracleArgs),
    /// Exact and approximate score moments with regularity diagnostics
    Moments(MomentsArgs),
}

/// Report destination and reproducibility switches shared by all commands.
#[derive(Args)]
struct OutputArgs {
    /// Write the JSON report here; relative paths resolve inside
    /// $LRTEST_OUT_DIR when that variable is set
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Omit the timestamp so reruns produce byte-identical reports
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
struct TestArgs {
    /// CSV dataset with header id,time,event,group[,stratum]
    dataset: PathBuf,
    /// Combine strata with the stratified statistic
    #[arg(long)]
    stratified: bool,
    /// Include the per-time (or per-stratum) breakdown in the report
    #[arg(long)]
    components: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Hold the potential event times fixed; redraw assignment and censoring
    Finite,
    /// Hold the assignment fixed (first half treated); redraw the rest
    Superpop,
    /// Redraw everything each replication
    Random,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum StatArg {
    /// Summarize the plain logrank statistic
    Lr,
    /// Summarize the stratified statistic
    Slr,
    /// Summarize both
    Both,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file path, or a preset name such as table3-case1 or
    /// table4-case-iv
    source: String,
    /// Override the conditioning mode
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Which statistic to summarize (defaults to both when the scenario
    /// computes the stratified statistic, otherwise lr)
    #[arg(long, value_enum)]
    stat: Option<StatArg>,
    /// Override the population size
    #[arg(long)]
    n: Option<usize>,
    /// Override the replication count
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed for the generator; required unless the scenario file sets one
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = machine default); never affects the results
    #[arg(long)]
    threads: Option<usize>,
    /// Write every replication's statistics to this CSV
    #[arg(long, value_name = "PATH")]
    samples: Option<PathBuf>,
    /// Write the summarized histogram bins to this CSV
    #[arg(long, value_name = "PATH")]
    histogram: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ChecksArg {
    /// Run every check
    All,
    /// Conditional law of the treated event count given each history
    Hypergeom,
    /// Zero conditional means of the centered counts, zero score mean
    Martingale,
    /// Marginal and conditional laws of the per-time counts
    Marginals,
    /// Three-way agreement of the score variance
    Variance,
}

#[derive(Args)]
struct OracleArgs {
    /// Population spec file (see the bundled examples)
    population: PathBuf,
    /// Which checks to run
    #[arg(long, value_enum, default_value_t = ChecksArg::All)]
    checks: ChecksArg,
    /// Population-size cap for enumeration (hard ceiling 12)
    #[arg(long)]
    cap: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct MomentsArgs {
    /// Population spec file (see the bundled examples)
    population: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

/// The Rust runtime starts with SIGPIPE ignored, turning writes to a
/// closed pipe (`lrtest ... | head`) into panics; restore the default so
/// the process ends quietly like other line-oriented tools.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = u8::try_from(err.exit_code()).unwrap_or(2);
            let _ = err.print();
            return ExitCode::from(if code == 0 { 0 } else { 2 });
        }
    };
    let outcome = match cli.command {
        Command::Test(args) => commands::run_test(args),
        Command::Simulate(args) => commands::run_simulate(args),
        Command::Oracle(args) => commands::run_oracle(args),
        Command::Moments(args) => commands::run_moments(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
