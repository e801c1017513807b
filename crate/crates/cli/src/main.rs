//! `promptplan`: synthesize fixtures, run pipeline modes, evaluate and
//! compare runs.

mod args;
mod config;
mod error;
mod evaluate;
mod fixtures;
mod fsutil;
mod manifest;
mod png;
mod report;
mod run;
mod serve;
mod synth;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliResult;

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => synth::cmd_synth(&a),
        Command::Run(a) => run::cmd_run(&a),
        Command::Eval(a) => evaluate::cmd_eval(&a),
        Command::Report(a) => report::cmd_report(&a),
        Command::ServeOracle(a) => serve::cmd_serve_oracle(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PROMPTPLAN_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
