mod args;
mod commands;
mod config;
mod data;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::UsageError;

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    let cache = cli.cache_dir.as_path();
    match &cli.command {
        Command::Ingest(a) => commands::ingest::run(a, cache),
        Command::Serve(a) => commands::serve::run(a, cache),
        Command::MapLabels(a) => commands::map_labels::run(a),
        Command::Stats(a) => commands::stats::run(a),
        Command::TrainClassifier(a) => commands::classifier::train(a, cache),
        Command::EvalClassifier(a) => commands::classifier::eval(a, cache),
        Command::TrainCaptioner(a) => commands::captioner::train(a, cache),
        Command::Generate(a) => commands::captioner::generate(a, cache),
        Command::Score(a) => commands::score::run(a),
    }
}

/// Usage and configuration problems exit with 2, everything else with 1.
fn category(err: &anyhow::Error) -> (&'static str, u8) {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return ("usage", 2);
        }
        if let Some(e) = cause.downcast_ref::<coherence_core::Error>() {
            return match e {
                coherence_core::Error::Config { .. }
                | coherence_core::Error::InsufficientAnnotators(_)
                | coherence_core::Error::OverlapTooLarge { .. } => ("config", 2),
                coherence_core::Error::Io(_) => ("io", 1),
                coherence_core::Error::NonFiniteLoss { .. } => ("training", 1),
                coherence_core::Error::Network { .. } | coherence_core::Error::MissingFixture(_) => ("image", 1),
                _ => ("data", 1),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return ("io", 1);
        }
    }
    ("runtime", 1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = category(&err);
            eprintln!("error[{kind}]: {err:#}");
            ExitCode::from(code)
        }
    }
}
