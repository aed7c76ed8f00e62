use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use raddiff_cli::commands::{self, CliError, CliResult, Command};
use raddiff_cli::config::{parse_config, RunConfig};

#[derive(Parser)]
#[command(
    name = "raddiff",
    version,
    about = "Kinetic radiative transfer and its diffusion limit"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML run configuration; defaults apply to omitted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Recorded in the run directory.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the worker pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run directory (default `runs/<subcommand>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Moment identities of the angular quadrature.
    Quadcheck,
    /// Kinetic solve to `run.t_end`.
    Simulate,
    /// Equilibrium-diffusion limit from the compatible initial datum.
    Limit,
    /// Initial layers of order 0 and 1.
    Layers,
    /// Duhamel fixed point and grid cross-validation.
    Oracle,
    /// Epsilon sweep against the composite expansions.
    Converge,
    /// Residual scaling of the composite expansions.
    Residuals,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Quadcheck => Command::Quadcheck,
            Cmd::Simulate => Command::Simulate,
            Cmd::Limit => Command::Limit,
            Cmd::Layers => Command::Layers,
            Cmd::Oracle => Command::Oracle,
            Cmd::Converge => Command::Converge,
            Cmd::Residuals => Command::Residuals,
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError {
                code: "io".to_owned(),
                message: format!("{}: {e}", path.display()),
            })?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError {
                code: "invalid-parameter".to_owned(),
                message: "--threads must be positive".to_owned(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError {
                code: "threads".to_owned(),
                message: e.to_string(),
            })?;
    }
    let command = Command::from(cli.command);
    let out = cli.out.unwrap_or_else(|| PathBuf::from("runs").join(command.name()));
    commands::run(command, &cfg, &out)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
