//! Command-line front end for fitting, evaluating and reporting polynomial
//! joint-density models of time-series residuals.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.

mod commands;
mod dieboldli;
mod errors;
mod ingest;

use clap::Parser;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hcr",
    version,
    about = "Joint-density models for multivariate time-series residuals",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
