//! `primeclass` command line.
//!
//! Exit codes: 0 success, 1 self-test or internal failure, 2 usage, config or I/O
//! error, 3 numeric divergence.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Environment variable naming the root directory for run outputs.
pub const RUNS_ENV: &str = "PRIMECLASS_RUNS";

#[derive(Parser)]
#[command(name = "primeclass", version, about = "Prime/non-prime sequence classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Primality of integer ranges.
    #[command(subcommand)]
    Primes(PrimesCmd),
    /// Statistics of the configured train/test ranges.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Train one config, or every cell of a sweep.
    Train {
        #[arg(long, conflicts_with = "sweep", required_unless_present = "sweep")]
        config: Option<PathBuf>,
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Output directory; defaults to a hash-named directory under $PRIMECLASS_RUNS.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Only print the final summary.
        #[arg(long)]
        quiet: bool,
    },
    /// Score a checkpoint on the integers offset+lo .. offset+hi.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        lo: u64,
        #[arg(long)]
        hi: u64,
        #[arg(long, default_value_t = 0)]
        offset: u64,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Fraction of windows scored.
        #[arg(long, default_value_t = 1.0)]
        subsample: f64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Also write the output here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Post-hoc analysis of a run directory.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Built-in correctness checks.
    Selftest {
        /// Negate the backward rule of one primitive (default gelu) to show the checks bite.
        #[arg(long, value_name = "OP", num_args = 0..=1, default_missing_value = "gelu")]
        inject_fault: Option<String>,
    },
}

#[derive(Subcommand)]
enum PrimesCmd {
    /// Count primes in offset+lo .. offset+hi.
    Scan {
        #[arg(long)]
        lo: u64,
        #[arg(long)]
        hi: u64,
        #[arg(long, default_value_t = 0)]
        offset: u64,
        /// Write the packed primality bitmap here.
        #[arg(long)]
        bitmap: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Block counts, PNT curve and distribution distances for the train/test pair.
    Stats {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        block: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// False-positive rate by factor count and cross-evaluation consistency.
    Fp {
        #[arg(long)]
        run: PathBuf,
        /// Number of trailing full evaluations compared for consistency.
        #[arg(long, default_value_t = 3)]
        last: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Primes(PrimesCmd::Scan { lo, hi, offset, bitmap }) => {
            commands::primes_scan(lo, hi, offset, bitmap.as_deref())
        }
        Command::Dataset(DatasetCmd::Stats { config, block, out }) => {
            commands::dataset_stats(&config, block, out)
        }
        Command::Train { config, sweep, out, quiet } => match (config, sweep) {
            (Some(c), _) => commands::train(&c, out, quiet),
            (None, Some(s)) => commands::train_sweep(&s, out, quiet),
            (None, None) => unreachable!("clap requires one of --config, --sweep"),
        },
        Command::Eval {
            checkpoint,
            lo,
            hi,
            offset,
            threshold,
            subsample,
            format,
            out,
        } => commands::eval(&commands::EvalArgs {
            checkpoint,
            lo,
            hi,
            offset,
            threshold,
            subsample,
            csv: format == Format::Csv,
            out,
        }),
        Command::Analyze(AnalyzeCmd::Fp { run, last }) => commands::analyze_fp(&run, last),
        Command::Selftest { inject_fault } => commands::selftest(inject_fault.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
