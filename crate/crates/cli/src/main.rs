mod args;
mod commands;
mod manifest;

use std::io::IsTerminal;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::{Failure, Globals};

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .without_time()
        .with_max_level(if cli.quiet {
            tracing::Level::WARN
        } else {
            tracing::Level::INFO
        })
        .init();

    let globals = Globals {
        seed: cli.seed,
        strict: cli.strict,
    };
    if cli.strict {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(1).build_global() {
            eprintln!("error: could not pin to a single thread: {e}");
            return ExitCode::from(1);
        }
    }

    let result = match cli.command {
        Command::Train(a) => commands::train_cmd(a, globals),
        Command::Evaluate(a) => commands::evaluate_cmd(a, globals),
        Command::Predict(a) => commands::predict_cmd(a, globals),
        Command::Export(a) => commands::export_cmd(a, globals),
        Command::Serve(a) => commands::serve_cmd(a, globals),
        Command::Synth(a) => commands::synth_cmd(a, globals),
        Command::Inspect(a) => commands::inspect_cmd(a, globals),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                Failure::Usage(_) => "usage error",
                Failure::Runtime(_) => "error",
            };
            eprintln!("{kind}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
