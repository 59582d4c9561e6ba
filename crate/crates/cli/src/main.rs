//! `ranset` command-line harness: train random-set classifiers, evaluate
//! checkpoints, and compute uncertainty measures on stored predictions.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{cmd_eval, cmd_measures, cmd_train, Overrides};
use ranset::credal::DistanceMode;

#[derive(Parser)]
#[command(name = "ranset", version, about = "Random-set classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the configured output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the configured training seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Credal distance mode for evaluation summaries
    #[arg(long, global = true, value_enum)]
    distance_mode: Option<DistanceModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistanceModeArg {
    #[value(name = "minVertex")]
    MinVertex,
    #[value(name = "projection")]
    Projection,
}

impl From<DistanceModeArg> for DistanceMode {
    fn from(arg: DistanceModeArg) -> Self {
        match arg {
            DistanceModeArg::MinVertex => DistanceMode::MinVertex,
            DistanceModeArg::Projection => DistanceMode::Projection,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment from a JSON config file
    Train { config: PathBuf },
    /// Evaluate a checkpoint against a dataset config
    Eval {
        checkpoint: PathBuf,
        dataset_config: PathBuf,
    },
    /// Print entropy measures for a mass-function JSON file
    Measures { mass_file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        distance_mode: cli.distance_mode.map(Into::into),
    };
    let result = match &cli.command {
        Command::Train { config } => cmd_train(config, &overrides).map(|_| ()),
        Command::Eval {
            checkpoint,
            dataset_config,
        } => cmd_eval(checkpoint, dataset_config, &overrides).map(|_| ()),
        Command::Measures { mass_file } => cmd_measures(mass_file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
