use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tpg_cli::commands::{
    eval, plot, predict, synthgen, train, EvalArgs, PlotArgs, PredictArgs, TrainArgs, FINAL_CHECKPOINT,
};
use tpg_cli::{CliResult, ExperimentConfig};
use tpg_core::model::Variant;

/// Train and evaluate gesture-conditioned video predictors.
///
/// Set TPG_DETERMINISTIC=1 for byte-identical reruns.
#[derive(Parser)]
#[command(name = "tpg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset into `data.root`.
    Synthgen {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train one variant on the training split.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Overrides the config's variant.
        #[arg(long)]
        variant: Option<Variant>,
        /// Total epochs to reach; overrides `training.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score trained variants on held-out clips.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Directory with one subdirectory per variant.
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = FINAL_CHECKPOINT)]
        checkpoint_name: String,
    },
    /// Predict one clip and write a comparison strip.
    Predict {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        clip: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw one SVG per metric from evaluation CSVs.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training horizon marker; defaults to the value in eval_meta.json.
        #[arg(long)]
        marker: Option<usize>,
    },
    /// synthgen, train every `eval.variants` entry, eval, then plot.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synthgen { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let m = synthgen(&cfg)?;
            println!("wrote {} clips to {}", m.entries.len(), cfg.data.root.display());
        }
        Command::Train {
            config,
            resume,
            variant,
            epochs,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = train(&cfg, &TrainArgs { resume, variant, epochs })?;
            println!("{}", out.final_checkpoint.display());
        }
        Command::Eval {
            config,
            checkpoints,
            out,
            checkpoint_name,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let args = EvalArgs {
                checkpoints,
                out,
                checkpoint_name,
            };
            let res = eval(&cfg, &args)?;
            print!("{}", res.table.to_csv_string());
        }
        Command::Predict {
            config,
            checkpoint,
            clip,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let res = predict(&cfg, &PredictArgs { checkpoint, clip, out })?;
            println!("{}", res.strip.display());
        }
        Command::Plot { input, out, marker } => {
            for p in plot(&PlotArgs { input, out, marker })? {
                println!("{}", p.display());
            }
        }
        Command::Pipeline { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            for p in tpg_cli::commands::pipeline(&cfg)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
