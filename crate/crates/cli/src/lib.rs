//! `rangekit` command line: render scans, class statistics, prediction
//! scoring and per-stage latency benchmarks.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod bench;
pub mod eval;
pub mod inputs;
pub mod project;
pub mod records;
pub mod settings;
pub mod stats;

pub use settings::{Format, Settings};

/// Exit status when everything succeeded.
pub const EXIT_OK: i32 = 0;
/// Exit status for per-file errors, failed commands or a missed budget.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Parser, Debug)]
#[command(name = "rangekit", version, about = "Range-view LiDAR toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render reflectivity, normal and label panels for every scan.
    Project(project::ProjectArgs),
    /// Class distributions and scan counts of labeled sequences.
    Stats(stats::StatsArgs),
    /// Score predictions against ground truth.
    Eval(eval::EvalArgs),
    /// Per-stage latency against a millisecond budget.
    Bench(bench::BenchArgs),
}

/// Flags shared by all subcommands.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Sensor preset (os2-128, hdl64-512, hdl64-2048) or a model TOML file.
    #[arg(long)]
    pub model: Option<String>,
    /// Class schema TOML; defaults to the built-in SemanticTHAB schema.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// TOML file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Process scans concurrently (thread count capped by RANGEKIT_THREADS).
    #[arg(long)]
    pub parallel: bool,
}

/// Outcome of a command: `failures` lists per-file problems that did not
/// stop the run.
#[derive(Debug, Default)]
pub struct Outcome {
    pub failures: Vec<String>,
    pub budget_missed: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() && !self.budget_missed {
            EXIT_OK
        } else {
            EXIT_FAILURE
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Project(a) => project::run(&a),
        Command::Stats(a) => stats::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::Bench(a) => bench::run(&a),
    }
}

/// Parses arguments, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(outcome) => {
            for f in &outcome.failures {
                eprintln!("error: {f}");
            }
            if outcome.budget_missed {
                eprintln!("error: latency budget missed");
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}
