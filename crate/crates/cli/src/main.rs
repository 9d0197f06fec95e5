mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use args::{Cli, Command};

fn init_logging(level: &str) -> anyhow::Result<()> {
    let filter = EnvFilter::try_new(level)?;
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_logging(&cli.log_level) {
        eprintln!("{{\"error\":{}}}", serde_json::json!(format!("bad --log-level: {e}")));
        return ExitCode::from(64);
    }
    let outcome = match &cli.command {
        Command::Preprocess(a) => commands::preprocess(a).map(|()| 0),
        Command::RunOnline(a) => commands::run(a, false),
        Command::Offline(a) => commands::run(a, true),
        Command::Evaluate(a) => commands::evaluate(a).map(|()| 0),
        Command::Profiles => commands::list_profiles().map(|()| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            eprintln!("{}", serde_json::json!({ "error": e.to_string(), "causes": chain }));
            ExitCode::FAILURE
        }
    }
}
