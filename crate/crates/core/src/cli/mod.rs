//! The `posefuse` command line.
//!
//! Exit codes: 0 success, 2 I/O or schema error, 3 empty aggregation,
//! 64 usage error.

mod args;
mod commands;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::{
    AggregateArgs, AggregationArgs, BenchArgs, Cli, Command, DepthArg, EvaluateArgs, GenModelsArgs,
    MaskArg, SynthArgs, WeightArg, DEFAULT_BENCH_QUATS, DEFAULT_BENCH_REPS, DEFAULT_OBJECTS,
};
pub use commands::{
    aggregate_scene, bench_rows, bench_set, defaults_json, evaluate_frames, frame_id_for, BenchRow,
    PipelineConfig,
};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 2;
pub const EXIT_EMPTY: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(Error::EmptyAggregation(_)) => EXIT_EMPTY,
            CliError::Lib(_) => EXIT_IO,
        }
    }
}

pub(crate) fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(_) if args.iter().skip(1).any(|a| a == "--print-defaults") => {
            print_defaults();
            return EXIT_OK;
        }
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("posefuse: {e}");
            e.exit_code()
        }
    }
}

fn print_defaults() {
    println!(
        "{}",
        serde_json::to_string_pretty(&defaults_json()).expect("defaults serialize")
    );
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    if cli.print_defaults {
        print_defaults();
        return Ok(());
    }
    match cli.command {
        None => Err(usage("no subcommand given; try --help")),
        Some(Command::Synth(a)) => commands::cmd_synth(&a),
        Some(Command::Aggregate(a)) => commands::cmd_aggregate(&a),
        Some(Command::Evaluate(a)) => commands::cmd_evaluate(&a),
        Some(Command::Bench(a)) => commands::cmd_bench(&a),
        Some(Command::GenModels(a)) => commands::cmd_gen_models(&a),
    }
}
