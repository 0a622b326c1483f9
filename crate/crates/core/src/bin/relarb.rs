use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand as ClapSubcommand};

use relarb::io::commands::{execute, Subcommand};
use relarb::io::config::parse_config_with_overrides;
use relarb::Error;

/// Entropy-portfolio switching strategy: simulation, backtests and
/// numerical checks.
#[derive(Debug, Parser)]
#[command(name = "relarb", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override a configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, ClapSubcommand)]
enum Command {
    /// Simulate an ensemble and report on the switching strategy.
    Simulate,
    /// Run the strategy on a capitalization CSV.
    Backtest,
    /// Master-equation residuals of the entropy portfolio.
    Residual,
    /// Residuals across nested step sizes.
    Convergence,
    /// Pointwise entropy minimum over an ensemble.
    Floor,
}

fn run(cli: Cli) -> Result<(), Error> {
    let text = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::config("--config", format!("{}: {e}", p.display())))?),
        None => None,
    };
    let cfg = parse_config_with_overrides(text.as_deref(), &cli.set)?;
    let cmd = match cli.command {
        Command::Simulate => Subcommand::Simulate,
        Command::Backtest => Subcommand::Backtest,
        Command::Residual => Subcommand::Residual,
        Command::Convergence => Subcommand::Convergence,
        Command::Floor => Subcommand::Floor,
    };
    let stdout = std::io::stdout();
    execute(cmd, &cfg, &mut stdout.lock())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
