use std::process::ExitCode;

use clap::Parser;
use mtlrrc_cli::{run, Cli, CliError};

fn fail(err: &CliError) -> ExitCode {
    eprintln!("{}", err.to_json());
    ExitCode::from(1)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let v = serde_json::json!({"error": {"kind": "usage", "message": e.to_string()}});
            eprintln!("{v}");
            return ExitCode::from(2);
        }
    };
    match cli.into_config().and_then(|cfg| run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
