use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;

use args::{Cli, Command};

fn exit_code(err: &taylor_attr::Error) -> u8 {
    use taylor_attr::Error::*;
    match err {
        Oracle(_) | NonFiniteOutput(_) => 3,
        EnumerationGuard(_) => 4,
        Parse(_)
        | Dimension(_)
        | UnsupportedActivation(_)
        | NonFiniteInput(_)
        | Config(_)
        | Io(_)
        | InvalidAllocation(_)
        | InvalidAlpha(_)
        | EmptyFamilyList
        | NotPolynomial
        | BackgroundNotSingleRow(_)
        | DegenerateLabels
        | InsufficientSamples(_)
        | MissingCoalition(_) => 2,
        SingularFit(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Explain(a) => commands::explain(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::DumpTable(a) => commands::dump_table(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
