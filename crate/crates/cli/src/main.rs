mod commands;
mod opts;

use std::process::ExitCode;

use clap::Parser;

use opts::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config; exit code 2.
    Usage(String),
    Core(cfrec_core::Error),
}

impl From<cfrec_core::Error> for CliError {
    fn from(e: cfrec_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use cfrec_core::Error::*;
        match self {
            CliError::Usage(_) => 2,
            // malformed input and invalid settings are usage errors
            CliError::Core(
                Parse { .. } | Config(_) | InvalidScale { .. } | RatingOutOfScale { .. } | DuplicateRating { .. },
            ) => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut flags = cli.flags;
    if let Some(path) = flags.config.clone() {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        flags.merge_config(&text)?;
    }
    let cfg = flags.resolve();
    eprintln!("# resolved configuration\n{cfg}");
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    match &cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Similar { target } => commands::similar(&cfg, target.as_deref()),
        Command::Predict { user, item, model } => commands::predict_cmd(&cfg, user, &item.0, model.as_deref()),
        Command::Recommend { user, model } => commands::recommend(&cfg, user, model.as_deref()),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::SweepK => commands::sweep(&cfg),
        Command::Factorize => commands::factorize(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
