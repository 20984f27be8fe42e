//! `kinchain` command line: dataset generation, training, evaluation and inspection.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

pub mod cmd;
pub mod config;

pub use cmd::eval::EvalArgs;
pub use cmd::generate::GenerateArgs;
pub use cmd::inspect::InspectArgs;
pub use cmd::train::TrainArgs;

/// Default dataset directory when `--data` / `--out` are not given.
pub const DATA_ENV: &str = "KINCHAIN_DATA";

#[derive(Debug, Parser)]
#[command(name = "kinchain", version, about = "Procedural kinematic-chain benchmark")]
pub struct Cli {
    /// TOML file with `[generate]`, `[train]`, `[eval]` or `[inspect]` tables;
    /// command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a dataset of random chains
    Generate(GenerateArgs),
    /// Train one estimator on a dataset's train split
    Train(TrainArgs),
    /// Train and score architectures, or score saved checkpoints
    Eval(EvalArgs),
    /// Dump the views of one instance and print its ground truth
    Inspect(InspectArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => config::ConfigFile::load(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => config::ConfigFile::default(),
    };
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.layer(file.generate).resolve()?;
            println!("effective config: {}", cfg.command_line());
            let summary = cmd::generate::generate(&cfg)?;
            println!("{summary}");
        }
        Command::Train(args) => {
            let cfg = args.layer(file.train).resolve()?;
            println!("effective config: {}", cfg.command_line());
            cmd::train::train(&cfg)?;
        }
        Command::Eval(args) => {
            let cfg = args.layer(file.eval).resolve()?;
            println!("effective config: {}", cfg.command_line());
            cmd::eval::eval(&cfg)?;
        }
        Command::Inspect(args) => {
            let cfg = args.layer(file.inspect).resolve()?;
            println!("effective config: {}", cfg.command_line());
            cmd::inspect::inspect(&cfg)?;
        }
    }
    Ok(())
}
