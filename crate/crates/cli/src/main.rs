mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};

use config::{Flags, RunConfig};

/// Spatio-temporal forecasting with latent relational dynamics.
#[derive(Parser)]
#[command(name = "stnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write a synthetic dataset, its relation file and ground truth
    Generate,
    /// Fit a model and write checkpoint, latent states and training trace
    Train,
    /// Roll a checkpoint forward `--horizon` steps
    Forecast,
    /// Rolling-origin comparison of models and baselines
    Evaluate,
    /// Hyperparameter search over latent size, lambda, gamma and powers
    Grid,
    /// Export learned relation weights or gate directions
    Discover,
    /// Compare analytic gradients with finite differences for every variant
    Gradcheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train => "train",
            Command::Forecast => "forecast",
            Command::Evaluate => "evaluate",
            Command::Grid => "grid",
            Command::Discover => "discover",
            Command::Gradcheck => "gradcheck",
        }
    }
}

fn run(cli: &Cli) -> Result<(), error::CliError> {
    let cfg = RunConfig::resolve(cli.command.name(), &cli.flags)?;
    log::debug!("resolved config: {cfg:?}");
    match cli.command {
        Command::Generate => commands::generate(&cfg),
        Command::Train => commands::train_cmd(&cfg),
        Command::Forecast => commands::forecast_cmd(&cfg),
        Command::Evaluate => commands::evaluate_cmd(&cfg),
        Command::Grid => commands::grid_cmd(&cfg),
        Command::Discover => commands::discover(&cfg),
        Command::Gradcheck => commands::gradcheck(&cfg),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
