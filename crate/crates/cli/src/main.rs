mod args;
mod commands;

use std::process::ExitCode;

use clap::error::{ContextKind, ContextValue};
use clap::Parser;
use serde_json::{json, Value};
use thiserror::Error;

use args::{Cli, Command, Config};
use commands::Ctx;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or parameter ranges; exit 2.
    #[error("{message}")]
    Usage { message: String, parameter: Option<String> },
    /// A library failure; exit 1.
    #[error(transparent)]
    Domain(#[from] patternforge::Error),
    /// `verify` found a problem; exit 1.
    #[error("verification failed: {message}")]
    Check { message: String, report: Value },
}

impl CliError {
    pub fn usage(message: impl Into<String>, parameter: Option<&str>) -> Self {
        CliError::Usage { message: message.into(), parameter: parameter.map(str::to_string) }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage { .. } => 2,
            CliError::Domain(_) | CliError::Check { .. } => 1,
        }
    }

    fn record(&self) -> Value {
        let (code, parameter) = match self {
            CliError::Usage { parameter, .. } => ("usage", parameter.as_deref()),
            CliError::Domain(e) => (e.code(), e.parameter()),
            CliError::Check { .. } => ("verification_failed", None),
        };
        let mut rec = json!({ "error": { "code": code, "message": self.to_string(), "parameter": parameter } });
        if let CliError::Check { report, .. } = self {
            rec["report"] = report.clone();
        }
        rec
    }
}

fn run(cli: Cli) -> Result<Value, CliError> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let ctx = Ctx::new(config.globals(&cli), cli.command.name());
    let name = cli.command.name();
    match &cli.command {
        Command::Phase(a) => commands::phase(&ctx, &config.resolve(name, a)?),
        Command::SynthesizeDiv(a) => commands::synthesize_div(&ctx, &config.resolve(name, a)?),
        Command::SynthesizeMult(a) => commands::synthesize_mult(&ctx, &config.resolve(name, a)?),
        Command::Path(a) => commands::path(&ctx, &config.resolve(name, a)?),
        Command::Simulate(a) => commands::simulate(&ctx, &config.resolve(name, a)?),
        Command::Staircase(a) => commands::staircase(&ctx, &config.resolve(name, a)?),
        Command::Eigen(a) => commands::eigen(&ctx, &config.resolve(name, a)?),
        Command::Verify(a) => commands::verify(&ctx, &config.resolve(name, a)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let message = e.render().to_string();
            let message = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            let arg = match e.get(ContextKind::InvalidArg).or_else(|| e.get(ContextKind::InvalidSubcommand)) {
                Some(ContextValue::String(s)) => Some(s.clone()),
                _ => None,
            };
            let err = CliError::usage(message, arg.as_deref());
            eprintln!("{}", err.record());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code())
        }
    }
}
